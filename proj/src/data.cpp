#include "fairdisc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

#include "fairdisc/error.hpp"

namespace fairdisc {

// ---- ProtectedSchema -------------------------------------------------------

ProtectedSchema::ProtectedSchema(std::vector<ProtectedAttribute> attributes)
    : attributes_(std::move(attributes)) {
  std::set<std::string> names;
  for (const auto& attr : attributes_) {
    if (!names.insert(attr.name).second) {
      throw_error(ErrorKind::Configuration, "duplicate protected attribute '" + attr.name + "'");
    }
    if (attr.groups.empty()) {
      throw_error(ErrorKind::Configuration, "protected attribute '" + attr.name + "' has no groups");
    }
    std::set<std::string> groups(attr.groups.begin(), attr.groups.end());
    if (groups.size() != attr.groups.size()) {
      throw_error(ErrorKind::Configuration,
                  "duplicate group name in protected attribute '" + attr.name + "'");
    }
  }
}

std::optional<std::size_t> ProtectedSchema::index_of(std::string_view name) const {
  for (std::size_t k = 0; k < attributes_.size(); ++k) {
    if (attributes_[k].name == name) return k;
  }
  return std::nullopt;
}

bool operator==(const ProtectedSchema& a, const ProtectedSchema& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].name != b[k].name || a[k].groups != b[k].groups) return false;
  }
  return true;
}

std::string describe(const ProtectedSchema& schema, const Subgroup& subgroup) {
  std::string out = "(";
  for (std::size_t k = 0; k < subgroup.codes.size(); ++k) {
    if (k > 0) out += ", ";
    const auto code = subgroup.codes[k];
    out += k < schema.size() && code < schema.group_count(k) ? schema[k].groups[code]
                                                             : std::to_string(code);
  }
  return out + ")";
}

nlohmann::json schema_to_json(const ProtectedSchema& schema) {
  nlohmann::json attrs = nlohmann::json::array();
  for (const auto& a : schema.attributes()) attrs.push_back({{"name", a.name}, {"groups", a.groups}});
  return {{"attributes", attrs}};
}

ProtectedSchema schema_from_json(const nlohmann::json& j) {
  std::vector<ProtectedAttribute> attrs;
  for (const auto& a : j.at("attributes")) {
    attrs.push_back({a.at("name").get<std::string>(), a.at("groups").get<std::vector<std::string>>()});
  }
  return ProtectedSchema(std::move(attrs));
}

// ---- SelectionMask -----------------------------------------------------------

SelectionMask::SelectionMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto& b : bits_) b = b != 0 ? 1 : 0;
}

SelectionMask SelectionMask::from_indices(std::size_t n, std::span<const std::size_t> kept) {
  SelectionMask mask = none(n);
  for (auto i : kept) {
    if (i >= n) throw_error(ErrorKind::ContractViolation, "mask index out of range");
    mask.bits_[i] = 1;
  }
  return mask;
}

std::size_t SelectionMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<std::size_t> SelectionMask::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out.push_back(i);
  }
  return out;
}

std::string SelectionMask::to_rle() const {
  std::string out;
  std::size_t i = 0;
  while (i < bits_.size()) {
    std::size_t j = i;
    while (j < bits_.size() && bits_[j] == bits_[i]) ++j;
    if (!out.empty()) out += ',';
    out += bits_[i] ? '1' : '0';
    out += '*';
    out += std::to_string(j - i);
    i = j;
  }
  return out;
}

SelectionMask SelectionMask::from_rle(std::string_view text) {
  std::vector<std::uint8_t> bits;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view run = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (run.size() < 3 || (run[0] != '0' && run[0] != '1') || run[1] != '*') {
      throw_error(ErrorKind::Data, "malformed mask run '" + std::string(run) + "'");
    }
    std::size_t length = 0;
    const auto digits = run.substr(2);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), length);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
      throw_error(ErrorKind::Data, "malformed mask run '" + std::string(run) + "'");
    }
    bits.insert(bits.end(), length, run[0] == '1' ? 1 : 0);
  }
  return SelectionMask(std::move(bits));
}

// ---- Dataset -------------------------------------------------------------------

Dataset::Dataset(DatasetParts parts) : parts_(std::move(parts)) {
  const std::size_t n = parts_.outcome.size();
  const auto& schema = parts_.schema;
  if (parts_.protected_codes.size() != schema.size()) {
    throw_error(ErrorKind::ContractViolation, "protected code columns do not match schema");
  }
  for (std::size_t k = 0; k < schema.size(); ++k) {
    const auto& col = parts_.protected_codes[k];
    if (col.size() != n) {
      throw_error(ErrorKind::ContractViolation, "protected column '" + schema[k].name + "' has " +
                                                    std::to_string(col.size()) + " rows, expected " +
                                                    std::to_string(n));
    }
    const auto groups = schema.group_count(k);
    for (auto code : col) {
      if (code >= groups) {
        throw_error(ErrorKind::ContractViolation,
                    "group code out of range for attribute '" + schema[k].name + "'");
      }
    }
  }
  for (auto y : parts_.outcome) {
    if (y > 1) throw_error(ErrorKind::ContractViolation, "outcome must be 0 or 1");
  }
  if (parts_.condition) {
    if (parts_.condition->size() != n) {
      throw_error(ErrorKind::ContractViolation, "condition column length mismatch");
    }
    for (auto c : *parts_.condition) {
      if (c > 1) throw_error(ErrorKind::ContractViolation, "condition must be 0 or 1");
    }
  }
  if (parts_.features.rows() == 0 && parts_.features.cols() == 0) parts_.features = Matrix(n, 0);
  if (parts_.features.rows() != n) {
    throw_error(ErrorKind::ContractViolation, "feature matrix row count mismatch");
  }
  if (parts_.feature_names.empty()) {
    for (std::size_t j = 0; j < parts_.features.cols(); ++j) {
      parts_.feature_names.push_back("f" + std::to_string(j));
    }
  }
  if (parts_.feature_names.size() != parts_.features.cols()) {
    throw_error(ErrorKind::ContractViolation, "feature name count mismatch");
  }
  if (parts_.source_rows.empty()) {
    parts_.source_rows.resize(n);
    std::iota(parts_.source_rows.begin(), parts_.source_rows.end(), std::size_t{0});
  }
  if (parts_.source_rows.size() != n) {
    throw_error(ErrorKind::ContractViolation, "source row count mismatch");
  }
}

std::span<const std::uint8_t> Dataset::condition() const {
  if (!parts_.condition) throw_error(ErrorKind::Configuration, "dataset has no condition column");
  return *parts_.condition;
}

Subgroup Dataset::subgroup_of(std::size_t row) const {
  Subgroup s;
  s.codes.reserve(parts_.protected_codes.size());
  for (const auto& col : parts_.protected_codes) s.codes.push_back(col[row]);
  return s;
}

Dataset Dataset::select(std::span<const std::size_t> rows) const {
  DatasetParts p;
  p.schema = parts_.schema;
  p.protected_codes.resize(parts_.protected_codes.size());
  for (std::size_t k = 0; k < parts_.protected_codes.size(); ++k) {
    auto& dst = p.protected_codes[k];
    dst.reserve(rows.size());
    for (auto r : rows) dst.push_back(parts_.protected_codes[k].at(r));
  }
  p.outcome.reserve(rows.size());
  for (auto r : rows) p.outcome.push_back(parts_.outcome.at(r));
  p.features = parts_.features.select_rows(rows);
  p.feature_names = parts_.feature_names;
  if (parts_.condition) {
    std::vector<std::uint8_t> cond;
    cond.reserve(rows.size());
    for (auto r : rows) cond.push_back((*parts_.condition)[r]);
    p.condition = std::move(cond);
  }
  p.encodings = parts_.encodings;
  p.label_column = parts_.label_column;
  p.favorable_label = parts_.favorable_label;
  p.unfavorable_label = parts_.unfavorable_label;
  p.condition_column = parts_.condition_column;
  p.condition_true_label = parts_.condition_true_label;
  p.source_rows.reserve(rows.size());
  for (auto r : rows) p.source_rows.push_back(parts_.source_rows[r]);
  if (rows.empty()) p.features = Matrix(0, parts_.features.cols());
  return Dataset(std::move(p));
}

Dataset Dataset::select(const SelectionMask& mask) const {
  if (mask.size() != rows()) {
    throw_error(ErrorKind::ContractViolation, "mask length " + std::to_string(mask.size()) +
                                                  " != row count " + std::to_string(rows()));
  }
  const auto idx = mask.indices();
  return select(idx);
}

Dataset Dataset::with_outcome(std::vector<std::uint8_t> outcome) const {
  if (outcome.size() != rows()) throw_error(ErrorKind::ContractViolation, "outcome length mismatch");
  DatasetParts p = parts_;
  p.outcome = std::move(outcome);
  return Dataset(std::move(p));
}

namespace {

struct Fnv1a {
  std::uint64_t state = 1469598103934665603ULL;
  void bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state ^= p[i];
      state *= 1099511628211ULL;
    }
  }
  template <typename T>
  void value(const T& v) {
    bytes(&v, sizeof(T));
  }
};

}  // namespace

std::uint64_t Dataset::content_hash() const {
  Fnv1a h;
  h.value(rows());
  h.value(feature_dim());
  for (std::size_t r = 0; r < rows(); ++r) {
    for (double x : parts_.features.row(r)) h.value(x);
    for (const auto& col : parts_.protected_codes) h.value(col[r]);
    h.value(parts_.outcome[r]);
    if (parts_.condition) h.value((*parts_.condition)[r]);
  }
  return h.state;
}

// ---- DatasetConfig ---------------------------------------------------------------

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j) {
  DatasetConfig c;
  try {
    c.label_column = j.at("label_column").get<std::string>();
    if (j.contains("favorable_value") && !j.at("favorable_value").is_null()) {
      const auto& fv = j.at("favorable_value");
      c.favorable_value = fv.is_string() ? fv.get<std::string>() : fv.dump();
    }
    c.protected_columns = j.at("protected").get<std::vector<std::string>>();
    c.feature_columns = j.value("features", std::vector<std::string>{});
    if (j.contains("group_order")) {
      c.group_order = j.at("group_order").get<std::map<std::string, std::vector<std::string>>>();
    }
    if (j.contains("condition_column") && !j.at("condition_column").is_null()) {
      c.condition_column = j.at("condition_column").get<std::string>();
    }
    c.condition_value = j.value("condition_value", c.condition_value);
    c.categorical = j.value("categorical", c.categorical);
    if (j.contains("feature_levels")) {
      c.feature_levels = j.at("feature_levels").get<std::map<std::string, std::vector<std::string>>>();
    }
    c.missing_values = j.value("missing_values", c.missing_values);
    c.strict = j.value("strict", c.strict);
    c.trim = j.value("trim", c.trim);
    const auto delim = j.value("delimiter", std::string(","));
    if (delim.size() != 1) throw_error(ErrorKind::Configuration, "delimiter must be one character");
    c.delimiter = delim[0];
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::Configuration, std::string("dataset config: ") + e.what());
  }
  for (const auto& [column, order] : c.group_order) {
    if (std::find(c.protected_columns.begin(), c.protected_columns.end(), column) ==
        c.protected_columns.end()) {
      throw_error(ErrorKind::Configuration,
                  "group_order names '" + column + "', which is not a protected column");
    }
  }
  return c;
}

DatasetConfig DatasetConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorKind::Io, "cannot open dataset config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::Configuration, path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json DatasetConfig::to_json() const {
  nlohmann::json j = {{"label_column", label_column},
                      {"protected", protected_columns},
                      {"features", feature_columns},
                      {"strict", strict},
                      {"trim", trim},
                      {"delimiter", std::string(1, delimiter)},
                      {"missing_values", missing_values}};
  if (favorable_value) j["favorable_value"] = *favorable_value;
  if (!group_order.empty()) j["group_order"] = group_order;
  if (condition_column) {
    j["condition_column"] = *condition_column;
    j["condition_value"] = condition_value;
  }
  if (!categorical.empty()) j["categorical"] = categorical;
  if (!feature_levels.empty()) j["feature_levels"] = feature_levels;
  return j;
}

// ---- CSV ingestion ---------------------------------------------------------------

namespace {

std::string trimmed(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Label-encodes values into codes, growing the vocabulary unless it is pinned
/// and strict.
class Vocabulary {
 public:
  Vocabulary(std::string column, std::optional<std::vector<std::string>> pinned, bool strict)
      : column_(std::move(column)), pinned_(pinned.has_value()), strict_(strict) {
    if (pinned) {
      for (auto& v : *pinned) add(v);
      if (index_.size() != values_.size()) {
        throw_error(ErrorKind::Configuration, "duplicate value in pinned order for '" + column_ + "'");
      }
    }
  }

  GroupCode code(const std::string& value, std::size_t source_row) {
    if (auto it = index_.find(value); it != index_.end()) return it->second;
    if (pinned_ && strict_) {
      throw_error(ErrorKind::Data, "column '" + column_ + "', row " + std::to_string(source_row + 1) +
                                       ": unseen category '" + value + "'");
    }
    return add(value);
  }

  std::vector<std::string> take() && { return std::move(values_); }
  std::size_t size() const noexcept { return values_.size(); }

 private:
  GroupCode add(const std::string& value) {
    const auto code = static_cast<GroupCode>(values_.size());
    if (index_.emplace(value, code).second) values_.push_back(value);
    return index_.at(value);
  }

  std::string column_;
  bool pinned_;
  bool strict_;
  std::vector<std::string> values_;
  std::unordered_map<std::string, GroupCode> index_;
};

std::size_t require_column(const csv::Table& table, const std::string& column, std::string_view role) {
  const auto idx = table.column_index(column);
  if (idx < 0) {
    throw_error(ErrorKind::Configuration,
                std::string(role) + " column '" + column + "' not found in CSV header");
  }
  return static_cast<std::size_t>(idx);
}

}  // namespace

Dataset encode_table(const csv::Table& table, const DatasetConfig& config, LoadReport* report) {
  if (config.label_column.empty()) throw_error(ErrorKind::Configuration, "label_column is required");
  const std::size_t label_idx = require_column(table, config.label_column, "label");
  std::vector<std::size_t> protected_idx;
  for (const auto& c : config.protected_columns) protected_idx.push_back(require_column(table, c, "protected"));
  std::vector<std::size_t> feature_idx;
  for (const auto& c : config.feature_columns) feature_idx.push_back(require_column(table, c, "feature"));
  std::optional<std::size_t> condition_idx;
  if (config.condition_column) condition_idx = require_column(table, *config.condition_column, "condition");

  auto cell = [&](std::size_t r, std::size_t c) {
    return config.trim ? trimmed(table.rows[r][c]) : table.rows[r][c];
  };
  auto is_missing = [&](const std::string& v) {
    return std::find(config.missing_values.begin(), config.missing_values.end(), v) !=
           config.missing_values.end();
  };

  // Rows with a missing protected or label value are dropped.
  std::vector<std::size_t> kept;
  std::size_t rejected = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    bool missing = is_missing(cell(r, label_idx));
    for (auto c : protected_idx) missing = missing || is_missing(cell(r, c));
    if (missing) {
      ++rejected;
    } else {
      kept.push_back(r);
    }
  }
  if (report) report->rejected_rows = rejected;
  const std::size_t n = kept.size();

  DatasetParts parts;
  parts.label_column = config.label_column;
  parts.source_rows = kept;

  // Label.
  parts.outcome.reserve(n);
  if (config.favorable_value) {
    parts.favorable_label = *config.favorable_value;
    std::optional<std::string> unfavorable;
    for (auto r : kept) {
      const auto v = cell(r, label_idx);
      const bool fav = v == *config.favorable_value;
      if (!fav && !unfavorable) unfavorable = v;
      parts.outcome.push_back(fav ? 1 : 0);
    }
    parts.unfavorable_label = unfavorable.value_or(parts.favorable_label == "0" ? "1" : "0");
  } else {
    for (auto r : kept) {
      const auto v = cell(r, label_idx);
      if (v != "0" && v != "1") {
        throw_error(ErrorKind::Data, "label column '" + config.label_column + "' has value '" + v +
                                         "' (row " + std::to_string(r + 1) +
                                         "); it is not strictly 0/1 and no favorable_value is set");
      }
      parts.outcome.push_back(v == "1" ? 1 : 0);
    }
  }

  // Protected attributes.
  std::vector<ProtectedAttribute> attrs;
  for (std::size_t k = 0; k < protected_idx.size(); ++k) {
    const auto& column = config.protected_columns[k];
    std::optional<std::vector<std::string>> pinned;
    if (auto it = config.group_order.find(column); it != config.group_order.end()) pinned = it->second;
    Vocabulary vocab(column, pinned, config.strict);
    std::vector<GroupCode> codes;
    codes.reserve(n);
    for (auto r : kept) codes.push_back(vocab.code(cell(r, protected_idx[k]), r));
    parts.protected_codes.push_back(std::move(codes));
    auto groups = std::move(vocab).take();
    if (groups.empty()) groups.push_back("<none>");
    attrs.push_back({column, std::move(groups)});
  }
  parts.schema = ProtectedSchema(std::move(attrs));

  // Condition (E2).
  if (condition_idx) {
    std::vector<std::uint8_t> cond;
    cond.reserve(n);
    for (auto r : kept) cond.push_back(cell(r, *condition_idx) == config.condition_value ? 1 : 0);
    parts.condition = std::move(cond);
    parts.condition_column = config.condition_column;
    parts.condition_true_label = config.condition_value;
  }

  // Features: numeric pass-through, categorical one-hot.
  struct Column {
    FeatureEncoding encoding;
    std::vector<GroupCode> codes;   // categorical
    std::vector<double> numbers;    // numeric
  };
  std::vector<Column> columns;
  std::size_t width = 0;
  for (std::size_t f = 0; f < feature_idx.size(); ++f) {
    Column col;
    col.encoding.column = config.feature_columns[f];
    const auto levels_it = config.feature_levels.find(col.encoding.column);
    bool categorical =
        levels_it != config.feature_levels.end() ||
        std::find(config.categorical.begin(), config.categorical.end(), col.encoding.column) !=
            config.categorical.end();
    if (!categorical) {
      col.numbers.reserve(n);
      for (auto r : kept) {
        const auto v = parse_number(cell(r, feature_idx[f]));
        if (!v) {
          categorical = true;
          break;
        }
        col.numbers.push_back(*v);
      }
    }
    if (categorical) {
      col.numbers.clear();
      std::optional<std::vector<std::string>> pinned;
      if (levels_it != config.feature_levels.end()) pinned = levels_it->second;
      Vocabulary vocab(col.encoding.column, pinned, config.strict);
      col.codes.reserve(n);
      for (auto r : kept) col.codes.push_back(vocab.code(cell(r, feature_idx[f]), r));
      col.encoding.categorical = true;
      col.encoding.levels = std::move(vocab).take();
      width += col.encoding.levels.size();
    } else {
      width += 1;
    }
    columns.push_back(std::move(col));
  }
  parts.features = Matrix(n, width);
  std::size_t offset = 0;
  for (auto& col : columns) {
    if (col.encoding.categorical) {
      for (std::size_t r = 0; r < n; ++r) parts.features(r, offset + col.codes[r]) = 1.0;
      for (const auto& level : col.encoding.levels) parts.feature_names.push_back(col.encoding.column + "=" + level);
      offset += col.encoding.levels.size();
    } else {
      for (std::size_t r = 0; r < n; ++r) parts.features(r, offset) = col.numbers[r];
      parts.feature_names.push_back(col.encoding.column);
      offset += 1;
    }
    parts.encodings.push_back(std::move(col.encoding));
  }
  return Dataset(std::move(parts));
}

Dataset load_csv(const std::filesystem::path& path, const DatasetConfig& config, LoadReport* report) {
  const auto table = csv::read(path, config.delimiter);
  try {
    return encode_table(table, config, report);
  } catch (const Error& e) {
    throw e.annotated(path.string());
  }
}

csv::Table to_table(const Dataset& dataset) {
  const auto& p = dataset.parts();
  csv::Table table;
  std::set<std::string> written;
  for (const auto& attr : dataset.schema().attributes()) written.insert(attr.name);
  written.insert(p.label_column);
  if (p.condition_column) written.insert(*p.condition_column);

  struct Source {
    const FeatureEncoding* encoding;
    std::size_t offset;
  };
  std::vector<Source> sources;
  std::size_t offset = 0;
  for (const auto& enc : p.encodings) {
    if (!written.contains(enc.column)) {
      sources.push_back({&enc, offset});
      table.header.push_back(enc.column);
    }
    offset += enc.categorical ? enc.levels.size() : 1;
  }
  // Features without encoding metadata are written column by column.
  const bool raw_features = p.encodings.empty();
  if (raw_features) {
    for (const auto& name : dataset.feature_names()) table.header.push_back(name);
  }
  for (const auto& attr : dataset.schema().attributes()) table.header.push_back(attr.name);
  if (p.condition_column) table.header.push_back(*p.condition_column);
  table.header.push_back(p.label_column);

  const std::string condition_false = p.condition_true_label == "0" ? "1" : "0";
  table.rows.reserve(dataset.rows());
  for (std::size_t r = 0; r < dataset.rows(); ++r) {
    std::vector<std::string> row;
    row.reserve(table.header.size());
    const auto x = dataset.features().row(r);
    if (raw_features) {
      for (double v : x) row.push_back(format_number(v));
    }
    for (const auto& src : sources) {
      if (src.encoding->categorical) {
        const auto begin = x.begin() + static_cast<std::ptrdiff_t>(src.offset);
        const auto end = begin + static_cast<std::ptrdiff_t>(src.encoding->levels.size());
        const auto level = static_cast<std::size_t>(std::max_element(begin, end) - begin);
        row.push_back(src.encoding->levels[level]);
      } else {
        row.push_back(format_number(x[src.offset]));
      }
    }
    for (std::size_t k = 0; k < dataset.schema().size(); ++k) {
      row.push_back(dataset.schema()[k].groups[dataset.protected_column(k)[r]]);
    }
    if (p.condition_column) row.push_back(dataset.condition()[r] ? p.condition_true_label : condition_false);
    row.push_back(dataset.outcome()[r] ? p.favorable_label : p.unfavorable_label);
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path, char delimiter) {
  csv::write(path, to_table(dataset), delimiter);
}

// ---- Subgroups ---------------------------------------------------------------------

std::vector<std::uint64_t> subgroup_keys(const Dataset& dataset) {
  const auto& schema = dataset.schema();
  std::uint64_t capacity = 1;
  for (std::size_t k = 0; k < schema.size(); ++k) {
    const auto g = static_cast<std::uint64_t>(schema.group_count(k));
    if (capacity > std::numeric_limits<std::uint64_t>::max() / g) {
      throw_error(ErrorKind::Capacity, "too many subgroup combinations to index");
    }
    capacity *= g;
  }
  std::vector<std::uint64_t> keys(dataset.rows(), 0);
  for (std::size_t k = 0; k < schema.size(); ++k) {
    const auto g = static_cast<std::uint64_t>(schema.group_count(k));
    const auto col = dataset.protected_column(k);
    for (std::size_t r = 0; r < keys.size(); ++r) keys[r] = keys[r] * g + col[r];
  }
  return keys;
}

Subgroup decode_subgroup_key(const ProtectedSchema& schema, std::uint64_t key) {
  Subgroup s;
  s.codes.resize(schema.size());
  for (std::size_t k = schema.size(); k-- > 0;) {
    const auto g = static_cast<std::uint64_t>(schema.group_count(k));
    s.codes[k] = static_cast<GroupCode>(key % g);
    key /= g;
  }
  return s;
}

std::vector<SubgroupCount> enumerate_subgroups(const Dataset& dataset, const SelectionMask* mask) {
  if (mask && mask->size() != dataset.rows()) {
    throw_error(ErrorKind::ContractViolation, "mask length " + std::to_string(mask->size()) +
                                                  " != row count " + std::to_string(dataset.rows()));
  }
  const auto keys = subgroup_keys(dataset);
  std::map<std::uint64_t, std::size_t> counts;
  for (std::size_t r = 0; r < keys.size(); ++r) {
    if (mask && !(*mask)[r]) continue;
    ++counts[keys[r]];
  }
  std::vector<SubgroupCount> out;
  out.reserve(counts.size());
  for (const auto& [key, count] : counts) out.push_back({decode_subgroup_key(dataset.schema(), key), count});
  return out;
}

// ---- Splitting ------------------------------------------------------------------------

std::string_view to_string(SplitStrategy strategy) noexcept {
  switch (strategy) {
    case SplitStrategy::Subgroup:
      return "subgroup";
    case SplitStrategy::Outcome:
      return "outcome";
    case SplitStrategy::Random:
      return "random";
  }
  return "random";
}

Split stratified_split(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw_error(ErrorKind::Configuration, "test_fraction must lie in (0, 1)");
  }
  const std::size_t n = dataset.rows();
  if (n < 2) throw_error(ErrorKind::Data, "cannot split fewer than 2 rows");

  auto strata_by = [n](const auto& key_of) {
    std::map<std::uint64_t, std::vector<std::size_t>> strata;
    for (std::size_t r = 0; r < n; ++r) strata[key_of(r)].push_back(r);
    return strata;
  };
  auto all_at_least_two = [](const auto& strata) {
    return std::all_of(strata.begin(), strata.end(), [](const auto& kv) { return kv.second.size() >= 2; });
  };

  Split split;
  const auto keys = subgroup_keys(dataset);
  auto strata = strata_by([&](std::size_t r) { return keys[r]; });
  split.strategy = SplitStrategy::Subgroup;
  if (!all_at_least_two(strata)) {
    strata = strata_by([&](std::size_t r) { return static_cast<std::uint64_t>(dataset.outcome()[r]); });
    split.strategy = SplitStrategy::Outcome;
    if (!all_at_least_two(strata)) {
      strata = strata_by([](std::size_t) { return std::uint64_t{0}; });
      split.strategy = SplitStrategy::Random;
    }
  }

  const auto total_test = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction)), 1, n - 1);

  // Largest-remainder allocation of total_test across strata.
  struct Alloc {
    std::vector<std::size_t>* rows;
    std::size_t take;
    double remainder;
    std::size_t order;
  };
  std::vector<Alloc> allocs;
  std::size_t assigned = 0;
  std::size_t order = 0;
  for (auto& [key, rows] : strata) {
    const double quota = static_cast<double>(rows.size()) * static_cast<double>(total_test) /
                         static_cast<double>(n);
    const auto base = std::min(rows.size(), static_cast<std::size_t>(std::floor(quota)));
    allocs.push_back({&rows, base, quota - static_cast<double>(base), order++});
    assigned += base;
  }
  std::vector<Alloc*> by_remainder;
  for (auto& a : allocs) by_remainder.push_back(&a);
  std::stable_sort(by_remainder.begin(), by_remainder.end(),
                   [](const Alloc* a, const Alloc* b) { return a->remainder > b->remainder; });
  for (std::size_t i = 0; assigned < total_test && i < by_remainder.size(); ++i) {
    if (by_remainder[i]->take < by_remainder[i]->rows->size()) {
      ++by_remainder[i]->take;
      ++assigned;
    }
  }

  std::mt19937_64 rng(seed);
  for (auto& a : allocs) {
    auto rows = *a.rows;
    std::shuffle(rows.begin(), rows.end(), rng);
    split.test_rows.insert(split.test_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(a.take));
    split.train_rows.insert(split.train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(a.take), rows.end());
  }
  std::sort(split.test_rows.begin(), split.test_rows.end());
  std::sort(split.train_rows.begin(), split.train_rows.end());
  split.train = dataset.select(split.train_rows);
  split.test = dataset.select(split.test_rows);
  return split;
}

}  // namespace fairdisc
