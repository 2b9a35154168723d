#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fairdisc/data.hpp"
#include "fairdisc/error.hpp"

namespace fixtures {

inline std::filesystem::path source_dir() { return FAIRDISC_SOURCE_DIR; }
inline std::filesystem::path config(const std::string& name) { return source_dir() / "configs" / name; }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fairdisc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// The four-person worked example: Age x Sex, outcomes 1, 0, 0, 1.
inline fairdisc::Dataset table1() {
  return fairdisc::load_csv(config("table1.csv"), fairdisc::DatasetConfig::load(config("table1.json")));
}

/// Builds a dataset from explicit columns; one noise feature.
inline fairdisc::Dataset make_dataset(const std::vector<std::vector<std::string>>& groups,
                                      const std::vector<std::vector<fairdisc::GroupCode>>& codes,
                                      const std::vector<std::uint8_t>& outcome,
                                      std::optional<std::vector<std::uint8_t>> condition = std::nullopt) {
  fairdisc::DatasetParts parts;
  std::vector<fairdisc::ProtectedAttribute> attrs;
  for (std::size_t k = 0; k < groups.size(); ++k) attrs.push_back({"z" + std::to_string(k), groups[k]});
  parts.schema = fairdisc::ProtectedSchema(attrs);
  parts.protected_codes = codes;
  parts.outcome = outcome;
  parts.features = fairdisc::Matrix(outcome.size(), 1);
  for (std::size_t r = 0; r < outcome.size(); ++r) parts.features(r, 0) = static_cast<double>(r % 7);
  parts.feature_names = {"f"};
  parts.encodings = {{"f", false, {}}};
  parts.condition = std::move(condition);
  return fairdisc::Dataset(std::move(parts));
}

/// Random dataset: p attributes with the given group counts, per-subgroup
/// treatment drawn uniformly, n rows.
inline fairdisc::Dataset random_dataset(std::mt19937_64& rng, const std::vector<std::size_t>& group_counts,
                                        std::size_t n, bool with_condition = false) {
  std::vector<std::vector<std::string>> groups;
  for (auto g : group_counts) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < g; ++i) names.push_back("g" + std::to_string(i));
    groups.push_back(names);
  }
  std::size_t cells = 1;
  for (auto g : group_counts) cells *= g;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> treatment(cells);
  for (auto& t : treatment) t = unit(rng);

  std::vector<std::vector<fairdisc::GroupCode>> codes(group_counts.size(), std::vector<fairdisc::GroupCode>(n));
  std::vector<std::uint8_t> outcome(n);
  std::vector<std::uint8_t> condition(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t key = 0;
    for (std::size_t k = 0; k < group_counts.size(); ++k) {
      std::uniform_int_distribution<fairdisc::GroupCode> pick(0, static_cast<fairdisc::GroupCode>(group_counts[k] - 1));
      codes[k][r] = pick(rng);
      key = key * group_counts[k] + codes[k][r];
    }
    outcome[r] = unit(rng) < treatment[key] ? 1 : 0;
    condition[r] = unit(rng) < 0.7 ? 1 : 0;
  }
  if (with_condition) return make_dataset(groups, codes, outcome, condition);
  return make_dataset(groups, codes, outcome);
}

/// Kind of the fairdisc::Error thrown by f, or empty when f returns.
template <typename F>
std::optional<fairdisc::ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const fairdisc::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace fixtures
