#pragma once

// Discrimination measures over a binary outcome and one or more protected
// attributes.
//
// Every measure is a function of per-subgroup (favorable, total) counts. The
// public `measure_*` functions count with a plain row loop; the mitigation
// module counts with bitset kernels and feeds the same `score` function.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fairdisc/data.hpp"

namespace fairdisc {

enum class MeasureKind { Single, Independent, Intersectional, Correlation, MutualInformation };
enum class Aggregator { Max, Sum, Mean };
enum class SingleGroupPolicy { Zero, Optimal, Expected };

std::string_view to_string(MeasureKind kind) noexcept;
std::string_view to_string(Aggregator agg) noexcept;
std::string_view to_string(SingleGroupPolicy policy) noexcept;
MeasureKind parse_measure_kind(std::string_view text);
Aggregator parse_aggregator(std::string_view text);
SingleGroupPolicy parse_policy(std::string_view text);

struct MeasureSpec {
  MeasureKind kind = MeasureKind::Intersectional;
  // Attribute for Single and Correlation, by index or by name (name wins).
  std::size_t attribute = 0;
  std::optional<std::string> attribute_name;
  Aggregator agg1 = Aggregator::Max;
  Aggregator agg2 = Aggregator::Max;  // Independent only
  SingleGroupPolicy policy = SingleGroupPolicy::Zero;
  // Reference treatment for the Expected policy. When unset, the favorable
  // rate of the whole (unmasked, conditioned) dataset is used.
  std::optional<double> p_expect;
  // Groups/subgroups with fewer selected rows are treated as unavailable.
  std::size_t min_count = 1;
  bool use_condition = false;
  std::string name;

  /// Index of the attribute this spec refers to; throws if it does not exist.
  std::size_t resolve_attribute(const ProtectedSchema& schema) const;
  void validate(const ProtectedSchema& schema) const;
  /// `name` if set, otherwise e.g. "intersectional[max]".
  std::string label() const;

  static MeasureSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct CellCount {
  std::uint64_t favorable = 0;
  std::uint64_t total = 0;

  friend bool operator==(const CellCount&, const CellCount&) = default;
};

/// Counts per joint subgroup, sorted by subgroup. Entries may have total 0.
struct JointCounts {
  std::vector<Subgroup> subgroups;
  std::vector<CellCount> cells;
};

/// Reference counting route: plain loop over (masked, conditioned) rows.
/// Only subgroups with at least one counted row are listed.
JointCounts count_joint(const Dataset& dataset, bool use_condition, const SelectionMask* mask = nullptr);

/// Favorable rate over all rows (conditioned if requested), ignoring any mask.
double base_rate(const Dataset& dataset, bool use_condition);

struct Score {
  std::optional<double> value;  // empty when the measure is undefined
  // Available groups (Single/Correlation), subgroups (Intersectional/MI), or
  // the largest per-attribute count (Independent).
  std::size_t available = 0;
  std::string undefined_reason;
};

/// Shared scoring step for every measure kind.
Score score(const JointCounts& counts, const ProtectedSchema& schema, const MeasureSpec& spec,
            double reference_rate);

struct TreatmentEntry {
  Subgroup key;  // one code for attribute scope, p codes for joint scope
  std::uint64_t favorable = 0;
  std::uint64_t total = 0;
  double probability = 0.0;
};

struct TreatmentTable {
  std::vector<TreatmentEntry> entries;

  std::vector<double> probabilities() const;
  const TreatmentEntry* find(const Subgroup& key) const;
};

/// P(favorable | condition, membership) per group of `attribute`, or per joint
/// subgroup when `attribute` is empty. Groups with fewer than `min_count`
/// counted rows are omitted.
TreatmentTable treatment_table(const Dataset& dataset, std::optional<std::size_t> attribute,
                               bool use_condition = false, const SelectionMask* mask = nullptr,
                               std::size_t min_count = 1);

double disparity(double t_i, double t_j);

/// agg1 over |t_i - t_j| for all unordered pairs; needs >= 2 treatments.
/// Max is computed as max - min, Sum via the sorted-prefix identity.
double aggregate_pairwise(std::span<const double> treatments, Aggregator agg);
/// agg2 over per-attribute scores; needs >= 1 value.
double aggregate(std::span<const double> values, Aggregator agg);

double single_group_value(double treatment, SingleGroupPolicy policy, double reference);

/// Plug-in mutual information in bits between the outcome and the cell index.
double mutual_information_bits(std::span<const CellCount> cells);

double measure_single(const Dataset& dataset, const MeasureSpec& spec, const SelectionMask* mask = nullptr);
double measure_independent(const Dataset& dataset, const MeasureSpec& spec, const SelectionMask* mask = nullptr);
double measure_intersectional(const Dataset& dataset, const MeasureSpec& spec,
                              const SelectionMask* mask = nullptr);
double measure_correlation(const Dataset& dataset, const MeasureSpec& spec, const SelectionMask* mask = nullptr);
double measure_mutual_information(const Dataset& dataset, const MeasureSpec& spec,
                                  const SelectionMask* mask = nullptr);

/// Dispatches on `spec.kind`. Throws MeasurementUndefined with a reason.
double measure(const Dataset& dataset, const MeasureSpec& spec, const SelectionMask* mask = nullptr);

}  // namespace fairdisc
