#include "fairdisc/measures.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fairdisc/error.hpp"

namespace fairdisc {

std::string_view to_string(MeasureKind kind) noexcept {
  switch (kind) {
    case MeasureKind::Single:
      return "single";
    case MeasureKind::Independent:
      return "independent";
    case MeasureKind::Intersectional:
      return "intersectional";
    case MeasureKind::Correlation:
      return "correlation";
    case MeasureKind::MutualInformation:
      return "mutual_information";
  }
  return "unknown";
}

std::string_view to_string(Aggregator agg) noexcept {
  switch (agg) {
    case Aggregator::Max:
      return "max";
    case Aggregator::Sum:
      return "sum";
    case Aggregator::Mean:
      return "mean";
  }
  return "unknown";
}

std::string_view to_string(SingleGroupPolicy policy) noexcept {
  switch (policy) {
    case SingleGroupPolicy::Zero:
      return "zero";
    case SingleGroupPolicy::Optimal:
      return "optimal";
    case SingleGroupPolicy::Expected:
      return "expected";
  }
  return "unknown";
}

MeasureKind parse_measure_kind(std::string_view text) {
  if (text == "single") return MeasureKind::Single;
  if (text == "independent" || text == "indep") return MeasureKind::Independent;
  if (text == "intersectional" || text == "intersect") return MeasureKind::Intersectional;
  if (text == "correlation" || text == "corr") return MeasureKind::Correlation;
  if (text == "mutual_information" || text == "mi") return MeasureKind::MutualInformation;
  throw_error(ErrorKind::Configuration, "unknown measure kind '" + std::string(text) + "'");
}

Aggregator parse_aggregator(std::string_view text) {
  if (text == "max") return Aggregator::Max;
  if (text == "sum") return Aggregator::Sum;
  if (text == "mean") return Aggregator::Mean;
  throw_error(ErrorKind::Configuration, "unknown aggregator '" + std::string(text) + "'");
}

SingleGroupPolicy parse_policy(std::string_view text) {
  if (text == "zero") return SingleGroupPolicy::Zero;
  if (text == "optimal") return SingleGroupPolicy::Optimal;
  if (text == "expected") return SingleGroupPolicy::Expected;
  throw_error(ErrorKind::Configuration, "unknown single-group policy '" + std::string(text) + "'");
}

// ---- MeasureSpec ----------------------------------------------------------------

std::size_t MeasureSpec::resolve_attribute(const ProtectedSchema& schema) const {
  if (attribute_name) {
    if (auto k = schema.index_of(*attribute_name)) return *k;
    throw_error(ErrorKind::Configuration, "unknown protected attribute '" + *attribute_name + "'");
  }
  if (attribute >= schema.size()) {
    throw_error(ErrorKind::Configuration, "attribute index " + std::to_string(attribute) +
                                              " out of range (" + std::to_string(schema.size()) +
                                              " protected attributes)");
  }
  return attribute;
}

void MeasureSpec::validate(const ProtectedSchema& schema) const {
  if (p_expect && !(*p_expect >= 0.0 && *p_expect <= 1.0)) {
    throw_error(ErrorKind::Configuration, "p_expect must lie in [0, 1]");
  }
  if (min_count == 0) throw_error(ErrorKind::Configuration, "min_count must be >= 1");
  if (kind == MeasureKind::Single || kind == MeasureKind::Correlation) resolve_attribute(schema);
}

std::string MeasureSpec::label() const {
  if (!name.empty()) return name;
  std::string attr = attribute_name.value_or(std::to_string(attribute));
  switch (kind) {
    case MeasureKind::Single:
      return "single[" + attr + ";" + std::string(to_string(agg1)) + "]";
    case MeasureKind::Independent:
      return "independent[" + std::string(to_string(agg1)) + "," + std::string(to_string(agg2)) + "]";
    case MeasureKind::Intersectional:
      return "intersectional[" + std::string(to_string(agg1)) + "]";
    case MeasureKind::Correlation:
      return "correlation[" + attr + "]";
    case MeasureKind::MutualInformation:
      return "mutual_information";
  }
  return "measure";
}

MeasureSpec MeasureSpec::from_json(const nlohmann::json& j) {
  MeasureSpec s;
  try {
    if (j.contains("kind")) s.kind = parse_measure_kind(j.at("kind").get<std::string>());
    if (j.contains("attribute")) {
      const auto& a = j.at("attribute");
      if (a.is_string()) {
        s.attribute_name = a.get<std::string>();
      } else {
        s.attribute = a.get<std::size_t>();
      }
    }
    if (j.contains("agg1")) s.agg1 = parse_aggregator(j.at("agg1").get<std::string>());
    if (j.contains("agg2")) s.agg2 = parse_aggregator(j.at("agg2").get<std::string>());
    if (j.contains("single_group_policy")) {
      s.policy = parse_policy(j.at("single_group_policy").get<std::string>());
    }
    if (j.contains("p_expect") && !j.at("p_expect").is_null()) s.p_expect = j.at("p_expect").get<double>();
    s.min_count = j.value("min_count", s.min_count);
    s.use_condition = j.value("use_condition", s.use_condition);
    s.name = j.value("name", s.name);
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::Configuration, std::string("measure spec: ") + e.what());
  }
  if (s.p_expect && !(*s.p_expect >= 0.0 && *s.p_expect <= 1.0)) {
    throw_error(ErrorKind::Configuration, "p_expect must lie in [0, 1]");
  }
  if (s.min_count == 0) throw_error(ErrorKind::Configuration, "min_count must be >= 1");
  return s;
}

nlohmann::json MeasureSpec::to_json() const {
  nlohmann::json j = {{"kind", to_string(kind)},
                      {"agg1", to_string(agg1)},
                      {"agg2", to_string(agg2)},
                      {"single_group_policy", to_string(policy)},
                      {"min_count", min_count},
                      {"use_condition", use_condition}};
  if (attribute_name) {
    j["attribute"] = *attribute_name;
  } else {
    j["attribute"] = attribute;
  }
  if (p_expect) j["p_expect"] = *p_expect;
  if (!name.empty()) j["name"] = name;
  return j;
}

// ---- Counting ---------------------------------------------------------------------

namespace {

void check_mask(const Dataset& dataset, const SelectionMask* mask) {
  if (mask && mask->size() != dataset.rows()) {
    throw_error(ErrorKind::ContractViolation, "mask length " + std::to_string(mask->size()) +
                                                  " != row count " + std::to_string(dataset.rows()));
  }
}

}  // namespace

JointCounts count_joint(const Dataset& dataset, bool use_condition, const SelectionMask* mask) {
  check_mask(dataset, mask);
  const auto keys = subgroup_keys(dataset);
  const auto outcome = dataset.outcome();
  std::span<const std::uint8_t> condition;
  if (use_condition) condition = dataset.condition();
  std::map<std::uint64_t, CellCount> cells;
  for (std::size_t r = 0; r < keys.size(); ++r) {
    if (mask && !(*mask)[r]) continue;
    if (use_condition && !condition[r]) continue;
    auto& c = cells[keys[r]];
    ++c.total;
    c.favorable += outcome[r];
  }
  JointCounts out;
  for (const auto& [key, cell] : cells) {
    out.subgroups.push_back(decode_subgroup_key(dataset.schema(), key));
    out.cells.push_back(cell);
  }
  return out;
}

double base_rate(const Dataset& dataset, bool use_condition) {
  std::uint64_t fav = 0;
  std::uint64_t total = 0;
  const auto outcome = dataset.outcome();
  std::span<const std::uint8_t> condition;
  if (use_condition) condition = dataset.condition();
  for (std::size_t r = 0; r < dataset.rows(); ++r) {
    if (use_condition && !condition[r]) continue;
    ++total;
    fav += outcome[r];
  }
  return total == 0 ? 0.0 : static_cast<double>(fav) / static_cast<double>(total);
}

// ---- Aggregation ----------------------------------------------------------------------

double disparity(double t_i, double t_j) { return std::abs(t_i - t_j); }

double aggregate_pairwise(std::span<const double> treatments, Aggregator agg) {
  const std::size_t g = treatments.size();
  if (g < 2) throw_error(ErrorKind::MeasurementUndefined, "pairwise aggregation needs >= 2 groups");
  if (agg == Aggregator::Max) {
    const auto [lo, hi] = std::minmax_element(treatments.begin(), treatments.end());
    return *hi - *lo;
  }
  std::vector<double> sorted(treatments.begin(), treatments.end());
  std::sort(sorted.begin(), sorted.end());
  // sum_{i<j} (t_(j) - t_(i)) = sum_j t_(j) * (2j - (g - 1))
  double sum = 0.0;
  for (std::size_t j = 0; j < g; ++j) {
    sum += sorted[j] * (2.0 * static_cast<double>(j) - static_cast<double>(g - 1));
  }
  sum = std::max(sum, 0.0);
  if (agg == Aggregator::Sum) return sum;
  const double pairs = static_cast<double>(g) * static_cast<double>(g - 1) / 2.0;
  return sum / pairs;
}

double aggregate(std::span<const double> values, Aggregator agg) {
  if (values.empty()) throw_error(ErrorKind::MeasurementUndefined, "nothing to aggregate");
  switch (agg) {
    case Aggregator::Max:
      return *std::max_element(values.begin(), values.end());
    case Aggregator::Sum: {
      double s = 0.0;
      for (double v : values) s += v;
      return s;
    }
    case Aggregator::Mean: {
      double s = 0.0;
      for (double v : values) s += v;
      return s / static_cast<double>(values.size());
    }
  }
  return 0.0;
}

double single_group_value(double treatment, SingleGroupPolicy policy, double reference) {
  switch (policy) {
    case SingleGroupPolicy::Zero:
      return 0.0;
    case SingleGroupPolicy::Optimal:
      return std::abs(treatment - 1.0);
    case SingleGroupPolicy::Expected:
      return std::abs(treatment - reference);
  }
  return 0.0;
}

double mutual_information_bits(std::span<const CellCount> cells) {
  std::uint64_t n = 0;
  std::uint64_t n_fav = 0;
  for (const auto& c : cells) {
    n += c.total;
    n_fav += c.favorable;
  }
  if (n == 0) throw_error(ErrorKind::MeasurementUndefined, "no rows selected");
  const std::uint64_t n_unfav = n - n_fav;
  // Each term is (n_sy / n) * log2(n_sy * n / (n_s * n_y)); the ratio is formed
  // from exact integer products so independent tables give exactly 0.
  double mi = 0.0;
  const double dn = static_cast<double>(n);
  for (const auto& c : cells) {
    if (c.total == 0) continue;
    const std::uint64_t joint[2] = {c.favorable, c.total - c.favorable};
    const std::uint64_t marginal[2] = {n_fav, n_unfav};
    for (int y = 0; y < 2; ++y) {
      if (joint[y] == 0) continue;
      const double num = static_cast<double>(joint[y]) * dn;
      const double den = static_cast<double>(c.total) * static_cast<double>(marginal[y]);
      mi += static_cast<double>(joint[y]) / dn * std::log2(num / den);
    }
  }
  return std::max(mi, 0.0);
}

// ---- Scoring ------------------------------------------------------------------------------

namespace {

double rate(const CellCount& c) { return static_cast<double>(c.favorable) / static_cast<double>(c.total); }

std::vector<CellCount> marginal(const JointCounts& counts, const ProtectedSchema& schema, std::size_t k) {
  std::vector<CellCount> out(schema.group_count(k));
  for (std::size_t i = 0; i < counts.cells.size(); ++i) {
    auto& m = out[counts.subgroups[i].codes[k]];
    m.favorable += counts.cells[i].favorable;
    m.total += counts.cells[i].total;
  }
  return out;
}

std::vector<double> available_treatments(std::span<const CellCount> cells, std::size_t min_count) {
  std::vector<double> t;
  for (const auto& c : cells) {
    if (c.total >= min_count && c.total > 0) t.push_back(rate(c));
  }
  return t;
}

/// One attribute (or the joint variable) reduced to a score, dispatching on
/// the number of available groups.
Score score_groups(std::span<const CellCount> cells, const MeasureSpec& spec, double reference_rate) {
  Score s;
  const auto t = available_treatments(cells, spec.min_count);
  s.available = t.size();
  if (t.empty()) {
    s.undefined_reason = "no groups available";
    return s;
  }
  if (t.size() == 1) {
    const double reference = spec.p_expect.value_or(reference_rate);
    s.value = single_group_value(t.front(), spec.policy, reference);
    return s;
  }
  s.value = aggregate_pairwise(t, spec.agg1);
  return s;
}

Score score_correlation(std::span<const CellCount> cells) {
  Score s;
  std::uint64_t n = 0;
  std::uint64_t fav = 0;
  double sum_x = 0.0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    n += cells[i].total;
    fav += cells[i].favorable;
    sum_x += static_cast<double>(i) * static_cast<double>(cells[i].total);
    if (cells[i].total > 0) ++s.available;
  }
  if (n == 0) {
    s.undefined_reason = "no rows selected";
    return s;
  }
  if (s.available < 2) {
    s.undefined_reason = "zero variance in the protected attribute";
    return s;
  }
  if (fav == 0 || fav == n) {
    s.undefined_reason = "zero variance in the outcome";
    return s;
  }
  const double dn = static_cast<double>(n);
  const double mean_x = sum_x / dn;
  const double mean_y = static_cast<double>(fav) / dn;
  double cov = 0.0;
  double var_x = 0.0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].total == 0) continue;
    const double dx = static_cast<double>(i) - mean_x;
    const double total = static_cast<double>(cells[i].total);
    cov += dx * (static_cast<double>(cells[i].favorable) - total * mean_y);
    var_x += total * dx * dx;
  }
  const double var_y = dn * mean_y * (1.0 - mean_y);
  s.value = std::clamp(std::abs(cov) / std::sqrt(var_x * var_y), 0.0, 1.0);
  return s;
}

}  // namespace

Score score(const JointCounts& counts, const ProtectedSchema& schema, const MeasureSpec& spec,
            double reference_rate) {
  if (schema.empty()) {
    Score s;
    s.undefined_reason = "no protected attributes";
    return s;
  }
  switch (spec.kind) {
    case MeasureKind::Single: {
      const auto m = marginal(counts, schema, spec.resolve_attribute(schema));
      return score_groups(m, spec, reference_rate);
    }
    case MeasureKind::Intersectional:
      return score_groups(counts.cells, spec, reference_rate);
    case MeasureKind::Independent: {
      Score s;
      std::vector<double> per_attribute;
      for (std::size_t k = 0; k < schema.size(); ++k) {
        const auto m = marginal(counts, schema, k);
        const Score inner = score_groups(m, spec, reference_rate);
        s.available = std::max(s.available, inner.available);
        if (inner.value) per_attribute.push_back(*inner.value);
      }
      if (per_attribute.empty()) {
        s.undefined_reason = "no groups available";
        return s;
      }
      s.value = aggregate(per_attribute, spec.agg2);
      return s;
    }
    case MeasureKind::Correlation:
      return score_correlation(marginal(counts, schema, spec.resolve_attribute(schema)));
    case MeasureKind::MutualInformation: {
      Score s;
      for (const auto& c : counts.cells) s.available += c.total > 0 ? 1 : 0;
      if (s.available == 0) {
        s.undefined_reason = "no rows selected";
        return s;
      }
      s.value = mutual_information_bits(counts.cells);
      return s;
    }
  }
  return {};
}

// ---- Treatment tables -------------------------------------------------------------------

std::vector<double> TreatmentTable::probabilities() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.probability);
  return out;
}

const TreatmentEntry* TreatmentTable::find(const Subgroup& key) const {
  for (const auto& e : entries) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

TreatmentTable treatment_table(const Dataset& dataset, std::optional<std::size_t> attribute,
                               bool use_condition, const SelectionMask* mask, std::size_t min_count) {
  const auto joint = count_joint(dataset, use_condition, mask);
  TreatmentTable table;
  auto add = [&](Subgroup key, const CellCount& c) {
    if (c.total == 0 || c.total < min_count) return;
    table.entries.push_back({std::move(key), c.favorable, c.total, rate(c)});
  };
  if (attribute) {
    if (*attribute >= dataset.schema().size()) {
      throw_error(ErrorKind::Configuration, "attribute index out of range");
    }
    const auto m = marginal(joint, dataset.schema(), *attribute);
    for (std::size_t i = 0; i < m.size(); ++i) add(Subgroup{{static_cast<GroupCode>(i)}}, m[i]);
  } else {
    for (std::size_t i = 0; i < joint.cells.size(); ++i) add(joint.subgroups[i], joint.cells[i]);
  }
  return table;
}

// ---- Measures ------------------------------------------------------------------------------

double measure(const Dataset& dataset, const MeasureSpec& spec, const SelectionMask* mask) {
  spec.validate(dataset.schema());
  if (spec.use_condition && !dataset.has_condition()) {
    throw_error(ErrorKind::Configuration, "measure uses a condition but the dataset has none");
  }
  const auto counts = count_joint(dataset, spec.use_condition, mask);
  const double reference =
      spec.policy == SingleGroupPolicy::Expected && !spec.p_expect ? base_rate(dataset, spec.use_condition) : 0.0;
  const Score s = score(counts, dataset.schema(), spec, reference);
  if (!s.value) throw_error(ErrorKind::MeasurementUndefined, spec.label() + ": " + s.undefined_reason);
  return *s.value;
}

namespace {

double measure_as(MeasureKind kind, const Dataset& dataset, MeasureSpec spec, const SelectionMask* mask) {
  spec.kind = kind;
  return measure(dataset, spec, mask);
}

}  // namespace

double measure_single(const Dataset& dataset, const MeasureSpec& spec, const SelectionMask* mask) {
  return measure_as(MeasureKind::Single, dataset, spec, mask);
}

double measure_independent(const Dataset& dataset, const MeasureSpec& spec, const SelectionMask* mask) {
  return measure_as(MeasureKind::Independent, dataset, spec, mask);
}

double measure_intersectional(const Dataset& dataset, const MeasureSpec& spec, const SelectionMask* mask) {
  return measure_as(MeasureKind::Intersectional, dataset, spec, mask);
}

double measure_correlation(const Dataset& dataset, const MeasureSpec& spec, const SelectionMask* mask) {
  return measure_as(MeasureKind::Correlation, dataset, spec, mask);
}

double measure_mutual_information(const Dataset& dataset, const MeasureSpec& spec, const SelectionMask* mask) {
  return measure_as(MeasureKind::MutualInformation, dataset, spec, mask);
}

}  // namespace fairdisc
