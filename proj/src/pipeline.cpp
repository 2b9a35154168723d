#include "fairdisc/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "fairdisc/error.hpp"
#include "parallel.hpp"

namespace fairdisc {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::optional<double> try_measure(const Dataset& ds, const MeasureSpec& spec) {
  try {
    return measure(ds, spec);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::MeasurementUndefined) throw;
    return std::nullopt;
  }
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

// ---- ExperimentConfig ----------------------------------------------------------------

void ExperimentConfig::validate(bool require_source) const {
  if (trials == 0) throw_error(ErrorKind::Configuration, "trials must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw_error(ErrorKind::Configuration, "test_fraction must lie in (0, 1)");
  }
  if (measures.empty()) throw_error(ErrorKind::Configuration, "at least one measure is required");
  if (models.empty()) throw_error(ErrorKind::Configuration, "at least one model kind is required");
  if (require_source && synthetic.has_value() == data.has_value()) {
    throw_error(ErrorKind::Configuration, "exactly one of 'data' and 'synthetic' must be given");
  }
  if (data && !dataset_config) throw_error(ErrorKind::Configuration, "'data' requires 'dataset_config'");
  ga.validate();
  hyper.validate();
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw_error(ErrorKind::Configuration, "experiment config must be a JSON object");
    if (j.contains("data")) c.data = resolve(base_dir, j.at("data").get<std::string>());
    if (j.contains("dataset_config")) {
      const auto& dc = j.at("dataset_config");
      c.dataset_config = dc.is_string() ? DatasetConfig::load(resolve(base_dir, dc.get<std::string>()))
                                        : DatasetConfig::from_json(dc);
    }
    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      c.synthetic = s.is_string() ? SyntheticSpec::load(resolve(base_dir, s.get<std::string>()))
                                  : SyntheticSpec::from_json(s);
    }
    c.name = j.value("name", std::string{});
    if (c.name.empty()) c.name = c.data ? c.data->stem().string() : std::string("synthetic");

    if (j.contains("measures")) {
      for (const auto& m : j.at("measures")) c.measures.push_back(MeasureSpec::from_json(m));
    } else {
      MeasureSpec indep;
      indep.kind = MeasureKind::Independent;
      MeasureSpec inter;
      inter.kind = MeasureKind::Intersectional;
      c.measures = {indep, inter};
    }
    if (j.contains("ga")) c.ga = GAConfig::from_json(j.at("ga"));
    c.trials = j.value("trials", c.trials);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& m : j.at("models")) c.models.push_back(parse_model_kind(m.get<std::string>()));
    }
    if (j.contains("hyper")) c.hyper = HyperParams::from_json(j.at("hyper"));
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    c.base_seed = j.value("base_seed", c.base_seed);
    c.parallel = j.value("parallel", c.parallel);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::Configuration, std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorKind::Io, "cannot open experiment config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::Configuration, path.string() + ": " + e.what());
  }
  try {
    return from_json(j, path.parent_path());
  } catch (const Error& e) {
    throw e.annotated(path.string());
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json measures_json = nlohmann::json::array();
  for (const auto& m : measures) measures_json.push_back(m.to_json());
  nlohmann::json models_json = nlohmann::json::array();
  for (auto m : models) models_json.push_back(to_string(m));
  nlohmann::json j = {{"name", name},
                      {"measures", measures_json},
                      {"ga", ga.to_json()},
                      {"trials", trials},
                      {"test_fraction", test_fraction},
                      {"models", models_json},
                      {"hyper", hyper.to_json()},
                      {"base_seed", base_seed}};
  if (data) j["data"] = data->filename().string();
  if (dataset_config) j["dataset_config"] = dataset_config->to_json();
  if (synthetic) j["synthetic"] = synthetic->to_json();
  return j;
}

Dataset ExperimentConfig::load_dataset() const {
  if (synthetic) return generate_synthetic(*synthetic);
  if (!data || !dataset_config) throw_error(ErrorKind::Configuration, "experiment config names no dataset");
  return load_csv(*data, *dataset_config);
}

// ---- Statistics ------------------------------------------------------------------------

Stat Stat::of(std::vector<std::optional<double>> values) {
  Stat s;
  s.values = std::move(values);
  double sum = 0.0;
  bool first = true;
  for (const auto& v : s.values) {
    if (!v) continue;
    ++s.defined;
    sum += *v;
    s.min = first ? *v : std::min(s.min, *v);
    s.max = first ? *v : std::max(s.max, *v);
    first = false;
  }
  if (s.defined == 0) return s;
  const double k = static_cast<double>(s.defined);
  s.mean = std::clamp(sum / k, s.min, s.max);
  double ss = 0.0;
  for (const auto& v : s.values) {
    if (v) ss += (*v - s.mean) * (*v - s.mean);
  }
  s.std = std::sqrt(ss / k);
  return s;
}

nlohmann::json Stat::to_json() const {
  nlohmann::json vals = nlohmann::json::array();
  for (const auto& v : values) vals.push_back(optional_json(v));
  if (defined == 0) {
    return {{"values", vals}, {"defined", 0}, {"mean", nullptr}, {"std", nullptr}, {"min", nullptr}, {"max", nullptr}};
  }
  return {{"values", vals}, {"defined", defined}, {"mean", mean}, {"std", std}, {"min", min}, {"max", max}};
}

// ---- Report ------------------------------------------------------------------------------

void ExperimentReport::aggregate() {
  aggregates.clear();
  if (trials.empty()) return;
  const auto& layout = trials.front();
  for (std::size_t m = 0; m < layout.measures.size(); ++m) {
    MeasureAggregate agg;
    agg.measure = layout.measures[m].measure;
    auto collect = [&](auto field) {
      std::vector<std::optional<double>> v;
      for (const auto& t : trials) v.push_back(field(t.measures.at(m)));
      return Stat::of(std::move(v));
    };
    agg.psi_train_before = collect([](const MeasureRecord& r) { return std::optional(r.psi_train_before); });
    agg.psi_train_after = collect([](const MeasureRecord& r) { return std::optional(r.psi_train_after); });
    agg.subgroups_before =
        collect([](const MeasureRecord& r) { return std::optional(static_cast<double>(r.subgroups_before)); });
    agg.subgroups_after =
        collect([](const MeasureRecord& r) { return std::optional(static_cast<double>(r.subgroups_after)); });
    agg.psi_test_labels = collect([](const MeasureRecord& r) { return r.psi_test_labels; });
    for (std::size_t k = 0; k < layout.measures[m].models.size(); ++k) {
      ModelAggregate ma;
      ma.model = layout.measures[m].models[k].model;
      ma.data = layout.measures[m].models[k].data;
      ma.auroc = collect([k](const MeasureRecord& r) { return std::optional(r.models.at(k).auroc); });
      ma.psi_predictions = collect([k](const MeasureRecord& r) { return r.models.at(k).psi_predictions; });
      agg.models.push_back(std::move(ma));
    }
    aggregates.push_back(std::move(agg));
  }
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json trials_json = nlohmann::json::array();
  for (const auto& t : trials) {
    nlohmann::json measures_json = nlohmann::json::array();
    for (const auto& m : t.measures) {
      nlohmann::json models_json = nlohmann::json::array();
      for (const auto& r : m.models) {
        models_json.push_back({{"model", to_string(r.model)},
                               {"data", r.data},
                               {"auroc", r.auroc},
                               {"psi_predictions", optional_json(r.psi_predictions)}});
      }
      measures_json.push_back({{"measure", m.measure},
                               {"psi_train_before", m.psi_train_before},
                               {"psi_train_after", m.psi_train_after},
                               {"subgroups_before", m.subgroups_before},
                               {"subgroups_after", m.subgroups_after},
                               {"rows_train", m.rows_train},
                               {"rows_kept", m.rows_kept},
                               {"psi_test_labels", optional_json(m.psi_test_labels)},
                               {"models", models_json}});
    }
    trials_json.push_back({{"trial", t.trial},
                           {"seed", t.seed},
                           {"split_strategy", t.split_strategy},
                           {"test_hash", t.test_hash},
                           {"measures", measures_json}});
  }
  nlohmann::json aggregates_json = nlohmann::json::array();
  for (const auto& a : aggregates) {
    nlohmann::json models_json = nlohmann::json::array();
    for (const auto& m : a.models) {
      models_json.push_back({{"model", to_string(m.model)},
                             {"data", m.data},
                             {"auroc", m.auroc.to_json()},
                             {"psi_predictions", m.psi_predictions.to_json()}});
    }
    aggregates_json.push_back({{"measure", a.measure},
                               {"psi_train_before", a.psi_train_before.to_json()},
                               {"psi_train_after", a.psi_train_after.to_json()},
                               {"subgroups_before", a.subgroups_before.to_json()},
                               {"subgroups_after", a.subgroups_after.to_json()},
                               {"psi_test_labels", a.psi_test_labels.to_json()},
                               {"models", models_json}});
  }
  return {{"dataset", dataset}, {"config", config}, {"trials", trials_json}, {"aggregates", aggregates_json}};
}

ExperimentReport ExperimentReport::from_json(const nlohmann::json& j) {
  ExperimentReport r;
  try {
    r.dataset = j.at("dataset").get<std::string>();
    r.config = j.at("config");
    for (const auto& tj : j.at("trials")) {
      TrialRecord t;
      t.trial = tj.at("trial").get<std::size_t>();
      t.seed = tj.at("seed").get<std::uint64_t>();
      t.split_strategy = tj.at("split_strategy").get<std::string>();
      t.test_hash = tj.at("test_hash").get<std::uint64_t>();
      for (const auto& mj : tj.at("measures")) {
        MeasureRecord m;
        m.measure = mj.at("measure").get<std::string>();
        m.psi_train_before = mj.at("psi_train_before").get<double>();
        m.psi_train_after = mj.at("psi_train_after").get<double>();
        m.subgroups_before = mj.at("subgroups_before").get<std::size_t>();
        m.subgroups_after = mj.at("subgroups_after").get<std::size_t>();
        m.rows_train = mj.at("rows_train").get<std::size_t>();
        m.rows_kept = mj.at("rows_kept").get<std::size_t>();
        m.psi_test_labels = optional_from(mj.at("psi_test_labels"));
        for (const auto& rj : mj.at("models")) {
          m.models.push_back({parse_model_kind(rj.at("model").get<std::string>()), rj.at("data").get<std::string>(),
                              rj.at("auroc").get<double>(), optional_from(rj.at("psi_predictions"))});
        }
        t.measures.push_back(std::move(m));
      }
      r.trials.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::Data, std::string("report: ") + e.what());
  }
  for (const auto& t : r.trials) {
    if (t.measures.size() != r.trials.front().measures.size()) {
      throw_error(ErrorKind::Data, "report: trials disagree on the measure list");
    }
    for (std::size_t m = 0; m < t.measures.size(); ++m) {
      if (t.measures[m].measure != r.trials.front().measures[m].measure ||
          t.measures[m].models.size() != r.trials.front().measures[m].models.size()) {
        throw_error(ErrorKind::Data, "report: trials disagree on the measure/model layout");
      }
    }
  }
  r.aggregate();
  if (r.to_json().at("aggregates") != j.at("aggregates")) {
    throw_error(ErrorKind::Data, "report: stored aggregates do not match the per-trial records");
  }
  return r;
}

// ---- Experiment ---------------------------------------------------------------------------

namespace {

ModelRecord evaluate_model(ModelKind kind, const std::string& data, const TrainedModel& model, const Dataset& test,
                           const MeasureSpec& spec) {
  const auto scores = model.predict_proba(test.features());
  ModelRecord rec;
  rec.model = kind;
  rec.data = data;
  rec.auroc = auroc(scores, test.outcome());
  rec.psi_predictions = try_measure(test.with_outcome(binarize(scores)), spec);
  return rec;
}

TrialRecord run_trial(const ExperimentConfig& config, const Dataset& dataset, std::size_t trial,
                      bool parallel_fitness) {
  TrialRecord rec;
  rec.trial = trial;
  rec.seed = config.base_seed + trial;
  const std::string where = "trial " + std::to_string(trial);
  std::string stage = "split";
  try {
    const Split split = stratified_split(dataset, config.test_fraction, rec.seed);
    rec.split_strategy = std::string(to_string(split.strategy));
    rec.test_hash = split.test.content_hash();

    HyperParams hyper = config.hyper;
    hyper.seed = rec.seed;
    std::vector<TrainedModel> original;
    for (auto kind : config.models) {
      stage = std::string("model ") + std::string(to_string(kind)) + " (original)";
      original.push_back(train(kind, split.train, hyper));
    }

    for (const auto& spec : config.measures) {
      MeasureRecord m;
      m.measure = spec.label();
      stage = "measure " + m.measure;
      GAConfig ga = config.ga;
      ga.seed = rec.seed;
      ga.parallel_fitness = parallel_fitness;
      ga.progress = nullptr;
      const MitigationResult res = mitigate(split.train, spec, ga);
      const Dataset fair = split.train.select(res.mask);
      m.psi_train_before = res.psi_before;
      m.psi_train_after = res.psi_after;
      m.subgroups_before = res.subgroups_before;
      m.subgroups_after = res.subgroups_after;
      m.rows_train = split.train.rows();
      m.rows_kept = res.rows_kept;
      m.psi_test_labels = try_measure(split.test, spec);
      for (std::size_t k = 0; k < config.models.size(); ++k) {
        const auto kind = config.models[k];
        stage = "measure " + m.measure + ", model " + std::string(to_string(kind));
        m.models.push_back(evaluate_model(kind, "original", original[k], split.test, spec));
        const TrainedModel fair_model = train(kind, fair, hyper);
        m.models.push_back(evaluate_model(kind, "fair", fair_model, split.test, spec));
      }
      rec.measures.push_back(std::move(m));
    }
    if (split.test.content_hash() != rec.test_hash) {
      throw_error(ErrorKind::ContractViolation, "test rows changed during the trial");
    }
  } catch (const Error& e) {
    throw e.annotated(where + ", " + stage);
  }
  return rec;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  return run_experiment(config, config.load_dataset());
}

ExperimentReport run_experiment(const ExperimentConfig& config, const Dataset& dataset) {
  config.validate(false);
  for (const auto& spec : config.measures) spec.validate(dataset.schema());
  ExperimentReport report;
  report.dataset = config.name;
  report.config = config.to_json();
  report.trials.resize(config.trials);
  // Trials run concurrently or the GA evaluates in parallel, never both.
  const bool parallel_trials = config.parallel && config.trials > 1;
  const bool parallel_fitness = config.parallel && !parallel_trials;
  const std::size_t threads = parallel_trials ? detail::resolve_threads(config.threads) : 1;
  detail::parallel_for(config.trials, threads, [&](std::size_t t) {
    report.trials[t] = run_trial(config, dataset, t, parallel_fitness);
  });
  report.aggregate();
  return report;
}

// ---- Summaries -----------------------------------------------------------------------------

std::string format_percent(double value) {
  return std::to_string(static_cast<long long>(std::llround(value * 100.0))) + "%";
}

std::string format_count(double value) {
  const long long tenths = std::llround(value * 10.0);
  std::string out = std::to_string(tenths / 10);
  if (tenths % 10 != 0) out += "." + std::to_string(std::llabs(tenths % 10));
  return out;
}

std::vector<SummaryRow> summarize(const ExperimentReport& report) {
  std::vector<SummaryRow> rows;
  for (const auto& a : report.aggregates) {
    rows.push_back({report.dataset, a.measure, format_percent(a.psi_train_before.mean),
                    format_percent(a.psi_train_after.mean), format_count(a.subgroups_before.mean),
                    format_count(a.subgroups_after.mean)});
  }
  return rows;
}

namespace {
const std::vector<std::string> kSummaryHeader = {"dataset",          "measure",         "disc_before",
                                                 "disc_after",       "subgroups_before", "subgroups_after"};
}

csv::Table summary_table(const std::vector<SummaryRow>& rows) {
  csv::Table t;
  t.header = kSummaryHeader;
  for (const auto& r : rows) {
    t.rows.push_back({r.dataset, r.measure, r.disc_before, r.disc_after, r.subgroups_before, r.subgroups_after});
  }
  return t;
}

std::vector<SummaryRow> parse_summary(const csv::Table& table) {
  if (table.header != kSummaryHeader) throw_error(ErrorKind::Data, "summary: unexpected header");
  std::vector<SummaryRow> rows;
  for (const auto& r : table.rows) rows.push_back({r[0], r[1], r[2], r[3], r[4], r[5]});
  return rows;
}

csv::Table scatter_table(const ExperimentReport& report) {
  csv::Table t;
  t.header = {"model", "data", "measure", "auroc_mean", "auroc_std", "psi_mean", "psi_std"};
  auto cell = [](const Stat& s, double v) { return s.defined ? shortest(v) : std::string{}; };
  for (const auto& a : report.aggregates) {
    for (const auto& m : a.models) {
      t.rows.push_back({std::string(to_string(m.model)), m.data, a.measure, cell(m.auroc, m.auroc.mean),
                        cell(m.auroc, m.auroc.std), cell(m.psi_predictions, m.psi_predictions.mean),
                        cell(m.psi_predictions, m.psi_predictions.std)});
    }
  }
  return t;
}

void emit_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  if (report.trials.empty() || report.aggregates.empty()) throw_error(ErrorKind::Data, "refusing to write an empty report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw_error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  const auto json_path = dir / "report.json";
  std::ofstream out(json_path, std::ios::binary);
  if (!out) throw_error(ErrorKind::Io, "cannot write " + json_path.string());
  out << report.to_json().dump(2) << '\n';
  if (!out) throw_error(ErrorKind::Io, "write failed: " + json_path.string());
  csv::write(dir / "summary.csv", summary_table(summarize(report)));
  csv::write(dir / "scatter.csv", scatter_table(report));
}

}  // namespace fairdisc
