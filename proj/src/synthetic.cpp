#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "fairdisc/data.hpp"
#include "fairdisc/error.hpp"

namespace fairdisc {

void SyntheticSpec::validate() const {
  if (rows > 0 && schema.empty()) {
    throw_error(ErrorKind::Configuration, "synthetic spec: rows > 0 needs at least one protected attribute");
  }
  double total = 0.0;
  std::set<Subgroup> seen;
  for (const auto& cell : cells) {
    if (cell.subgroup.codes.size() != schema.size()) {
      throw_error(ErrorKind::Configuration, "synthetic spec: subgroup arity does not match schema");
    }
    for (std::size_t k = 0; k < schema.size(); ++k) {
      if (cell.subgroup.codes[k] >= schema.group_count(k)) {
        throw_error(ErrorKind::Configuration, "synthetic spec: group code out of range");
      }
    }
    if (!seen.insert(cell.subgroup).second) {
      throw_error(ErrorKind::Configuration, "synthetic spec: subgroup listed twice");
    }
    if (!(cell.weight >= 0.0) || !std::isfinite(cell.weight)) {
      throw_error(ErrorKind::Configuration, "synthetic spec: weights must be non-negative");
    }
    if (!(cell.treatment >= 0.0 && cell.treatment <= 1.0)) {
      throw_error(ErrorKind::Configuration, "synthetic spec: treatments must lie in [0, 1]");
    }
    total += cell.weight;
  }
  if (rows > 0 && std::abs(total - 1.0) > 1e-9) {
    throw_error(ErrorKind::Configuration,
                "synthetic spec: subgroup weights sum to " + std::to_string(total) + ", expected 1");
  }
  if (!std::isfinite(group_offset) || !std::isfinite(label_signal)) {
    throw_error(ErrorKind::Configuration, "synthetic spec: offsets must be finite");
  }
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  try {
    s.rows = j.at("rows").get<std::size_t>();
    s.schema = schema_from_json(j.at("schema"));
    for (const auto& c : j.at("cells")) {
      SyntheticCell cell;
      cell.subgroup.codes = c.at("codes").get<std::vector<GroupCode>>();
      cell.weight = c.at("weight").get<double>();
      cell.treatment = c.at("treatment").get<double>();
      s.cells.push_back(std::move(cell));
    }
    s.feature_dims = j.value("feature_dims", s.feature_dims);
    s.seed = j.value("seed", s.seed);
    s.group_offset = j.value("group_offset", s.group_offset);
    s.label_signal = j.value("label_signal", s.label_signal);
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::Configuration, std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

SyntheticSpec SyntheticSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorKind::Io, "cannot open synthetic spec " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::Configuration, path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json SyntheticSpec::to_json() const {
  nlohmann::json cells_json = nlohmann::json::array();
  for (const auto& c : cells) {
    cells_json.push_back({{"codes", c.subgroup.codes}, {"weight", c.weight}, {"treatment", c.treatment}});
  }
  return {{"rows", rows},
          {"schema", schema_to_json(schema)},
          {"cells", cells_json},
          {"feature_dims", feature_dims},
          {"seed", seed},
          {"group_offset", group_offset},
          {"label_signal", label_signal}};
}

DatasetConfig SyntheticSpec::dataset_config() const {
  DatasetConfig c;
  c.label_column = "y";
  c.favorable_value = "1";
  for (const auto& attr : schema.attributes()) {
    c.protected_columns.push_back(attr.name);
    c.group_order[attr.name] = attr.groups;
  }
  for (std::size_t j = 0; j < feature_dims; ++j) c.feature_columns.push_back("x" + std::to_string(j));
  return c;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.rows;
  const std::size_t p = spec.schema.size();
  const std::size_t d = spec.feature_dims;

  DatasetParts parts;
  parts.schema = spec.schema;
  parts.protected_codes.assign(p, std::vector<GroupCode>(n));
  parts.outcome.resize(n);
  parts.features = Matrix(n, d);
  parts.label_column = "y";
  for (std::size_t j = 0; j < d; ++j) {
    parts.feature_names.push_back("x" + std::to_string(j));
    parts.encodings.push_back({"x" + std::to_string(j), false, {}});
  }

  if (n > 0) {
    std::vector<double> weights;
    for (const auto& c : spec.cells) weights.push_back(c.weight);
    std::mt19937_64 rng(spec.seed);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t r = 0; r < n; ++r) {
      const auto& cell = spec.cells[pick(rng)];
      for (std::size_t k = 0; k < p; ++k) parts.protected_codes[k][r] = cell.subgroup.codes[k];
      const bool favorable = unit(rng) < cell.treatment;
      parts.outcome[r] = favorable ? 1 : 0;
      for (std::size_t j = 0; j < d; ++j) {
        // x0 carries the label signal, the others the group offsets.
        const std::size_t attr = j == 0 ? 0 : (j - 1) % p;
        double x = noise(rng);
        if (j == 0) x += spec.label_signal * (favorable ? 1.0 : -1.0);
        if (j > 0 || d == 1) x += spec.group_offset * static_cast<double>(cell.subgroup.codes[attr]);
        parts.features(r, j) = x;
      }
    }
  }
  return Dataset(std::move(parts));
}

}  // namespace fairdisc
