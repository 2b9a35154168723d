#pragma once

// Tabular datasets with protected attributes: ingestion, encoding, subgroup
// enumeration, stratified splitting and a synthetic generator with planted
// subgroup treatments.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fairdisc/csv.hpp"
#include "fairdisc/matrix.hpp"

namespace fairdisc {

using GroupCode = std::uint32_t;

struct ProtectedAttribute {
  std::string name;
  std::vector<std::string> groups;
};

/// Ordered protected attributes Z_1..Z_p, each with its group vocabulary.
class ProtectedSchema {
 public:
  ProtectedSchema() = default;
  explicit ProtectedSchema(std::vector<ProtectedAttribute> attributes);

  std::size_t size() const noexcept { return attributes_.size(); }
  bool empty() const noexcept { return attributes_.empty(); }
  const ProtectedAttribute& operator[](std::size_t k) const { return attributes_[k]; }
  const std::vector<ProtectedAttribute>& attributes() const noexcept { return attributes_; }

  std::size_t group_count(std::size_t k) const { return attributes_[k].groups.size(); }
  std::optional<std::size_t> index_of(std::string_view name) const;

  friend bool operator==(const ProtectedSchema&, const ProtectedSchema&);

 private:
  std::vector<ProtectedAttribute> attributes_;
};

/// One group per protected attribute: (i_1, ..., i_p).
struct Subgroup {
  std::vector<GroupCode> codes;

  auto operator<=>(const Subgroup&) const = default;
  bool operator==(const Subgroup&) const = default;
};

std::string describe(const ProtectedSchema& schema, const Subgroup& subgroup);

/// Boolean row-inclusion vector; `true` keeps the row.
class SelectionMask {
 public:
  SelectionMask() = default;
  explicit SelectionMask(std::vector<std::uint8_t> bits);

  static SelectionMask all(std::size_t n) { return SelectionMask(std::vector<std::uint8_t>(n, 1)); }
  static SelectionMask none(std::size_t n) { return SelectionMask(std::vector<std::uint8_t>(n, 0)); }
  static SelectionMask from_indices(std::size_t n, std::span<const std::size_t> kept);

  std::size_t size() const noexcept { return bits_.size(); }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool value) { bits_[i] = value ? 1 : 0; }
  std::size_t count() const noexcept;
  std::vector<std::size_t> indices() const;
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  /// Runs of equal bits, e.g. "1*5,0*3,1*12". The empty mask encodes as "".
  std::string to_rle() const;
  static SelectionMask from_rle(std::string_view text);

  friend bool operator==(const SelectionMask&, const SelectionMask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// How a source column became feature columns; lets a Dataset be written back.
struct FeatureEncoding {
  std::string column;
  bool categorical = false;
  std::vector<std::string> levels;  // one output column per level when categorical
};

struct DatasetParts {
  ProtectedSchema schema;
  std::vector<std::vector<GroupCode>> protected_codes;  // one column per attribute
  std::vector<std::uint8_t> outcome;
  Matrix features;  // rows x d; may have 0 columns
  std::vector<std::string> feature_names;
  std::optional<std::vector<std::uint8_t>> condition;

  std::vector<FeatureEncoding> encodings;
  std::string label_column = "label";
  std::string favorable_label = "1";
  std::string unfavorable_label = "0";
  std::optional<std::string> condition_column;
  std::string condition_true_label = "1";
  std::vector<std::size_t> source_rows;  // row index in the source file; identity if empty
};

/// Immutable encoded dataset.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(DatasetParts parts);

  std::size_t rows() const noexcept { return parts_.outcome.size(); }
  std::size_t feature_dim() const noexcept { return parts_.features.cols(); }
  const ProtectedSchema& schema() const noexcept { return parts_.schema; }
  const Matrix& features() const noexcept { return parts_.features; }
  const std::vector<std::string>& feature_names() const noexcept { return parts_.feature_names; }
  std::span<const GroupCode> protected_column(std::size_t k) const { return parts_.protected_codes[k]; }
  std::span<const std::uint8_t> outcome() const noexcept { return parts_.outcome; }
  bool has_condition() const noexcept { return parts_.condition.has_value(); }
  std::span<const std::uint8_t> condition() const;
  std::span<const std::size_t> source_rows() const noexcept { return parts_.source_rows; }
  const DatasetParts& parts() const noexcept { return parts_; }

  Subgroup subgroup_of(std::size_t row) const;

  Dataset select(std::span<const std::size_t> rows) const;
  Dataset select(const SelectionMask& mask) const;
  Dataset with_outcome(std::vector<std::uint8_t> outcome) const;

  /// FNV-1a over every row's features, codes, outcome and condition.
  std::uint64_t content_hash() const;

 private:
  DatasetParts parts_;
};

struct DatasetConfig {
  std::string label_column;
  std::optional<std::string> favorable_value;
  std::vector<std::string> protected_columns;
  std::vector<std::string> feature_columns;
  std::map<std::string, std::vector<std::string>> group_order;
  std::optional<std::string> condition_column;
  std::string condition_value = "1";
  std::vector<std::string> categorical;  // forces categorical encoding
  std::map<std::string, std::vector<std::string>> feature_levels;
  std::vector<std::string> missing_values = {"", "?", "NA"};
  bool strict = true;
  bool trim = true;
  char delimiter = ',';

  static DatasetConfig from_json(const nlohmann::json& j);
  static DatasetConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct LoadReport {
  std::size_t rejected_rows = 0;  // missing protected or label value
};

Dataset encode_table(const csv::Table& table, const DatasetConfig& config, LoadReport* report = nullptr);
Dataset load_csv(const std::filesystem::path& path, const DatasetConfig& config,
                 LoadReport* report = nullptr);

/// Columns: features (decoded back to source values), protected, condition, label.
csv::Table to_table(const Dataset& dataset);
void write_csv(const Dataset& dataset, const std::filesystem::path& path, char delimiter = ',');

/// Mixed-radix subgroup key per row, first attribute most significant, so key
/// order equals lexicographic code order.
std::vector<std::uint64_t> subgroup_keys(const Dataset& dataset);
Subgroup decode_subgroup_key(const ProtectedSchema& schema, std::uint64_t key);

struct SubgroupCount {
  Subgroup subgroup;
  std::size_t count = 0;
};

/// Subgroups with at least one (selected) row, in lexicographic code order.
std::vector<SubgroupCount> enumerate_subgroups(const Dataset& dataset,
                                               const SelectionMask* mask = nullptr);

enum class SplitStrategy { Subgroup, Outcome, Random };
std::string_view to_string(SplitStrategy strategy) noexcept;

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  SplitStrategy strategy = SplitStrategy::Random;
};

/// Stratifies on the subgroup when every subgroup has >= 2 rows, else on the
/// outcome when both classes have >= 2 rows, else splits uniformly at random.
/// |test| = round(n * test_fraction), clamped to [1, n - 1].
Split stratified_split(const Dataset& dataset, double test_fraction, std::uint64_t seed);

struct SyntheticCell {
  Subgroup subgroup;
  double weight = 0.0;
  double treatment = 0.0;
};

struct SyntheticSpec {
  std::size_t rows = 0;
  ProtectedSchema schema;
  std::vector<SyntheticCell> cells;  // unlisted subgroups have weight 0
  std::size_t feature_dims = 4;
  std::uint64_t seed = 0;
  // feature j >= 1 += group_offset * code of attribute ((j - 1) mod p);
  // a single feature gets the offset of attribute 0
  double group_offset = 2.0;
  // feature 0 += label_signal * (2y - 1)
  double label_signal = 0.0;

  void validate() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
  static SyntheticSpec load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  /// Config that reads back what `write_csv(generate_synthetic(*this))` writes,
  /// with group order pinned to the schema.
  DatasetConfig dataset_config() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

nlohmann::json schema_to_json(const ProtectedSchema& schema);
ProtectedSchema schema_from_json(const nlohmann::json& j);

}  // namespace fairdisc
