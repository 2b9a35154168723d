#include "cli.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairdisc/data.hpp"
#include "fairdisc/error.hpp"
#include "fairdisc/measures.hpp"
#include "fairdisc/mitigation.hpp"
#include "fairdisc/pipeline.hpp"

namespace fairdisc::cli {

namespace {

using nlohmann::json;

json read_json(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorKind::Configuration, std::string("cannot open ") + what + " " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw_error(ErrorKind::Configuration, path + ": " + e.what());
  }
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

template <typename Parse>
CLI::Validator parses_as(Parse parse, std::string description) {
  return CLI::Validator(
      [parse](std::string& text) -> std::string {
        try {
          parse(text);
          return {};
        } catch (const Error& e) {
          return e.what();
        }
      },
      std::move(description));
}

// Dataset flags: --config supplies the file, individual flags override its keys.
struct DataOptions {
  std::string data;
  std::string config;
  std::optional<std::string> label;
  std::optional<std::string> favorable;
  std::vector<std::string> protected_columns;
  std::vector<std::string> features;
  std::optional<std::string> condition;
  std::optional<std::string> delimiter;

  void add(CLI::App* app) {
    app->add_option("--data", data, "Input CSV")->required();
    app->add_option("--config", config, "Dataset config JSON");
    app->add_option("--label", label, "Label column (label_column)");
    app->add_option("--favorable", favorable, "Favorable label value (favorable_value)");
    app->add_option("--protected", protected_columns, "Protected columns")->delimiter(',');
    app->add_option("--features", features, "Feature columns")->delimiter(',');
    app->add_option("--condition-column", condition, "Column realising the condition");
    app->add_option("--delimiter", delimiter, "CSV field delimiter");
  }

  DatasetConfig build() const {
    json j = config.empty() ? json::object() : read_json(config, "dataset config");
    if (label) j["label_column"] = *label;
    if (favorable) j["favorable_value"] = *favorable;
    if (!protected_columns.empty()) j["protected"] = protected_columns;
    if (!features.empty()) j["features"] = features;
    if (condition) j["condition_column"] = *condition;
    if (delimiter) j["delimiter"] = *delimiter;
    if (!j.contains("label_column") || !j.contains("protected")) {
      throw_error(ErrorKind::Configuration, "a label column and protected columns are required (--config or flags)");
    }
    return DatasetConfig::from_json(j);
  }
};

struct MeasureOptions {
  std::string spec_file;
  std::optional<std::string> kind;
  std::optional<std::string> attribute;
  std::optional<std::string> agg1;
  std::optional<std::string> agg2;
  std::optional<std::string> policy;
  std::optional<double> p_expect;
  std::optional<std::size_t> min_count;
  bool use_condition = false;

  void add(CLI::App* app) {
    app->add_option("--spec", spec_file, "Measure spec JSON");
    app->add_option("--measure", kind, "single | independent | intersectional | correlation | mutual_information")
        ->check(parses_as(parse_measure_kind, "MEASURE"));
    app->add_option("--attribute", attribute, "Attribute name or index (single, correlation)");
    app->add_option("--agg1", agg1, "max | sum | mean")->check(parses_as(parse_aggregator, "AGG"));
    app->add_option("--agg2", agg2, "max | sum | mean")->check(parses_as(parse_aggregator, "AGG"));
    app->add_option("--policy", policy, "Single-group policy: zero | optimal | expected")
        ->check(parses_as(parse_policy, "POLICY"));
    app->add_option("--p-expect", p_expect, "Reference treatment for the expected policy")
        ->check(CLI::Range(0.0, 1.0));
    app->add_option("--min-count", min_count, "Minimum rows per group")->check(CLI::PositiveNumber);
    app->add_flag("--use-condition", use_condition, "Condition on the dataset's condition column");
  }

  MeasureSpec build() const {
    json j = spec_file.empty() ? json::object() : read_json(spec_file, "measure spec");
    if (kind) j["kind"] = *kind;
    if (attribute) {
      const bool numeric = !attribute->empty() && attribute->find_first_not_of("0123456789") == std::string::npos;
      j["attribute"] = numeric ? json(std::stoul(*attribute)) : json(*attribute);
    }
    if (agg1) j["agg1"] = *agg1;
    if (agg2) j["agg2"] = *agg2;
    if (policy) j["single_group_policy"] = *policy;
    if (p_expect) j["p_expect"] = *p_expect;
    if (min_count) j["min_count"] = *min_count;
    if (use_condition) j["use_condition"] = true;
    return MeasureSpec::from_json(j);
  }
};

json treatment_rows(const Dataset& ds, const TreatmentTable& table, std::optional<std::size_t> attribute) {
  json rows = json::array();
  for (const auto& e : table.entries) {
    json row = {{"codes", e.key.codes}, {"rows", e.total}, {"favorable", e.favorable}, {"treatment", e.probability}};
    row["group"] = attribute ? ds.schema()[*attribute].groups[e.key.codes[0]] : describe(ds.schema(), e.key);
    rows.push_back(std::move(row));
  }
  return rows;
}

void print_table(std::ostream& out, const json& rows, const std::string& title) {
  std::size_t width = title.size();
  for (const auto& r : rows) width = std::max(width, r.at("group").get<std::string>().size());
  out << std::left << std::setw(static_cast<int>(width) + 2) << title << std::right << std::setw(8) << "rows"
      << std::setw(11) << "favorable" << std::setw(11) << "treatment" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(width) + 2) << r.at("group").get<std::string>() << std::right
        << std::setw(8) << r.at("rows").get<std::uint64_t>() << std::setw(11)
        << r.at("favorable").get<std::uint64_t>() << std::setw(11) << fixed6(r.at("treatment").get<double>())
        << '\n';
  }
}

int cmd_measure(const DataOptions& data_opts, const MeasureOptions& measure_opts, bool as_json, std::ostream& out) {
  const auto config = data_opts.build();
  const auto spec = measure_opts.build();
  LoadReport report;
  const Dataset ds = load_csv(data_opts.data, config, &report);
  const double psi = measure(ds, spec);

  const json joint = treatment_rows(ds, treatment_table(ds, std::nullopt, spec.use_condition), std::nullopt);
  json per_attribute = json::array();
  if (spec.kind == MeasureKind::Single || spec.kind == MeasureKind::Independent ||
      spec.kind == MeasureKind::Correlation) {
    for (std::size_t k = 0; k < ds.schema().size(); ++k) {
      per_attribute.push_back(
          {{"attribute", ds.schema()[k].name},
           {"groups", treatment_rows(ds, treatment_table(ds, k, spec.use_condition, nullptr, spec.min_count), k)}});
    }
  }

  if (as_json) {
    out << json{{"measure", spec.label()},
                {"spec", spec.to_json()},
                {"psi", psi},
                {"rows", ds.rows()},
                {"rejected_rows", report.rejected_rows},
                {"subgroups", joint},
                {"attributes", per_attribute}}
               .dump(2)
        << '\n';
    return 0;
  }
  out << "measure  " << spec.label() << '\n';
  out << "psi      " << fixed6(psi) << '\n';
  out << "rows     " << ds.rows();
  if (report.rejected_rows) out << " (" << report.rejected_rows << " rejected)";
  out << "\n\n";
  print_table(out, joint, "subgroup");
  for (const auto& a : per_attribute) {
    out << '\n';
    print_table(out, a.at("groups"), a.at("attribute").get<std::string>());
  }
  return 0;
}

struct GaOptions {
  std::string ga_file;
  std::optional<std::size_t> population;
  std::optional<std::size_t> generations;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> min_subgroups;
  std::optional<std::size_t> threads;
  bool parallel = false;
  bool progress = false;

  void add(CLI::App* app) {
    app->add_option("--ga", ga_file, "GA config JSON");
    app->add_option("--pop-size", population, "Population size")->check(CLI::PositiveNumber);
    app->add_option("--generations", generations, "Generations")->check(CLI::NonNegativeNumber);
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--min-subgroups", min_subgroups, "Penalise selections with fewer subgroups");
    app->add_option("--threads", threads, "Worker threads for fitness evaluation (0: all cores)");
    app->add_flag("--parallel", parallel, "Evaluate fitness in parallel");
    app->add_flag("--progress", progress, "Print a generation counter on stderr");
  }

  GAConfig build() const {
    json j = ga_file.empty() ? json::object() : read_json(ga_file, "GA config");
    if (population) j["population_size"] = *population;
    if (generations) j["generations"] = *generations;
    if (seed) j["seed"] = *seed;
    if (min_subgroups) j["min_subgroups"] = *min_subgroups;
    if (threads) j["threads"] = *threads;
    if (parallel) j["parallel_fitness"] = true;
    return GAConfig::from_json(j);
  }
};

int cmd_mitigate(const DataOptions& data_opts, const MeasureOptions& measure_opts, const GaOptions& ga_opts,
                 const std::string& out_path, const std::string& result_path, bool as_json, std::ostream& out,
                 std::ostream& err) {
  const auto config = data_opts.build();
  const auto spec = measure_opts.build();
  GAConfig ga = ga_opts.build();
  if (ga_opts.progress) {
    ga.progress = [&err, total = ga.generations](std::size_t gen, double best) {
      err << "\rgeneration " << gen << '/' << total << "  best " << fixed6(best) << std::flush;
      if (gen == total) err << '\n';
    };
  }
  const Dataset ds = load_csv(data_opts.data, config);
  const MitigationResult result = mitigate(ds, spec, ga);

  // Kept rows verbatim from the source file, in their original column order.
  const csv::Table source = csv::read(data_opts.data, config.delimiter);
  csv::Table fair;
  fair.header = source.header;
  const auto source_rows = ds.source_rows();
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    if (result.mask[r]) fair.rows.push_back(source.rows.at(source_rows[r]));
  }
  csv::write(out_path, fair, config.delimiter);

  std::filesystem::path sidecar = result_path.empty() ? std::filesystem::path(out_path).replace_extension(".json")
                                                      : std::filesystem::path(result_path);
  json j = result.to_json();
  j["measure"] = spec.to_json();
  j["ga"] = ga.to_json();
  {
    std::ofstream f(sidecar);
    if (!f) throw_error(ErrorKind::Io, "cannot write " + sidecar.string());
    f << j.dump(2) << '\n';
    if (!f) throw_error(ErrorKind::Io, "write failed: " + sidecar.string());
  }

  if (as_json) {
    j["out"] = out_path;
    j["result"] = sidecar.string();
    out << j.dump(2) << '\n';
    return 0;
  }
  out << "measure     " << spec.label() << '\n';
  out << "psi before  " << fixed6(result.psi_before) << '\n';
  out << "psi after   " << fixed6(result.psi_after) << '\n';
  out << "rows kept   " << result.rows_kept << " / " << ds.rows() << '\n';
  out << "subgroups   " << result.subgroups_before << " -> " << result.subgroups_after << '\n';
  out << "wrote       " << out_path << ", " << sidecar.string() << '\n';
  return 0;
}

int cmd_experiment(const std::string& path, const std::string& out_dir, std::optional<std::size_t> trials,
                   bool parallel, std::optional<std::size_t> threads, bool as_json, std::ostream& out) {
  ExperimentConfig config = ExperimentConfig::load(path);
  if (!out_dir.empty()) config.output_dir = out_dir;
  if (trials) config.trials = *trials;
  if (parallel) config.parallel = true;
  if (threads) config.threads = *threads;
  config.validate();
  const ExperimentReport report = run_experiment(config);
  emit_report(report, config.output_dir);
  const auto rows = summarize(report);

  if (as_json) {
    json summary = json::array();
    for (const auto& r : rows) {
      summary.push_back({{"dataset", r.dataset},
                         {"measure", r.measure},
                         {"disc_before", r.disc_before},
                         {"disc_after", r.disc_after},
                         {"subgroups_before", r.subgroups_before},
                         {"subgroups_after", r.subgroups_after}});
    }
    out << json{{"output_dir", config.output_dir.string()}, {"trials", report.trials.size()}, {"summary", summary}}
               .dump(2)
        << '\n';
    return 0;
  }
  csv::write(out, summary_table(rows));
  out << "wrote " << (config.output_dir / "report.json").string() << ", summary.csv, scatter.csv\n";
  return 0;
}

int cmd_generate(const std::string& spec_path, const std::string& out_path, std::optional<std::size_t> rows,
                 std::optional<std::uint64_t> seed, bool as_json, std::ostream& out) {
  SyntheticSpec spec = SyntheticSpec::load(spec_path);
  if (rows) spec.rows = *rows;
  if (seed) spec.seed = *seed;
  spec.validate();
  const Dataset ds = generate_synthetic(spec);
  write_csv(ds, out_path);
  if (as_json) {
    out << json{{"out", out_path}, {"rows", ds.rows()}, {"seed", spec.seed}, {"dataset_config", spec.dataset_config().to_json()}}
               .dump(2)
        << '\n';
  } else {
    out << "wrote " << ds.rows() << " rows to " << out_path << '\n';
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Discrimination measurement and mitigation for data with multiple protected attributes", "fairdisc"};
  app.require_subcommand(1);

  DataOptions measure_data;
  MeasureOptions measure_spec;
  bool measure_json = false;
  auto* measure_cmd = app.add_subcommand("measure", "Compute a discrimination measure");
  measure_data.add(measure_cmd);
  measure_spec.add(measure_cmd);
  measure_cmd->add_flag("--json", measure_json, "Machine-readable output");

  DataOptions mitigate_data;
  MeasureOptions mitigate_spec;
  GaOptions ga_opts;
  std::string mitigate_out;
  std::string mitigate_result;
  bool mitigate_json = false;
  auto* mitigate_cmd = app.add_subcommand("mitigate", "Select a low-discrimination row subset");
  mitigate_data.add(mitigate_cmd);
  mitigate_spec.add(mitigate_cmd);
  ga_opts.add(mitigate_cmd);
  mitigate_cmd->add_option("--out", mitigate_out, "Output CSV with the kept rows")->required();
  mitigate_cmd->add_option("--result", mitigate_result, "Result JSON (default: --out with .json extension)");
  mitigate_cmd->add_flag("--json", mitigate_json, "Machine-readable output");

  std::string exp_config;
  std::string exp_out;
  std::optional<std::size_t> exp_trials;
  bool exp_parallel = false;
  std::optional<std::size_t> exp_threads;
  bool exp_json = false;
  auto* experiment_cmd = app.add_subcommand("experiment", "Run the repeated-trial experiment");
  experiment_cmd->add_option("--exp-config", exp_config, "Experiment config JSON")->required();
  experiment_cmd->add_option("--out-dir", exp_out, "Output directory (overrides output_dir)");
  experiment_cmd->add_option("--trials", exp_trials, "Number of trials")->check(CLI::PositiveNumber);
  experiment_cmd->add_flag("--parallel", exp_parallel, "Run trials concurrently");
  experiment_cmd->add_option("--threads", exp_threads, "Worker threads (0: all cores)");
  experiment_cmd->add_flag("--json", exp_json, "Machine-readable output");

  std::string gen_spec;
  std::string gen_out;
  std::optional<std::size_t> gen_rows;
  std::optional<std::uint64_t> gen_seed;
  bool gen_json = false;
  auto* generate_cmd = app.add_subcommand("generate", "Write a synthetic dataset with planted treatments");
  generate_cmd->add_option("--spec", gen_spec, "Synthetic spec JSON")->required();
  generate_cmd->add_option("--out", gen_out, "Output CSV")->required();
  generate_cmd->add_option("--rows", gen_rows, "Row count (overrides the spec)");
  generate_cmd->add_option("--seed", gen_seed, "Seed (overrides the spec)");
  generate_cmd->add_flag("--json", gen_json, "Machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (measure_cmd->parsed()) return cmd_measure(measure_data, measure_spec, measure_json, out);
    if (mitigate_cmd->parsed()) {
      return cmd_mitigate(mitigate_data, mitigate_spec, ga_opts, mitigate_out, mitigate_result, mitigate_json, out,
                          err);
    }
    if (experiment_cmd->parsed()) {
      return cmd_experiment(exp_config, exp_out, exp_trials, exp_parallel, exp_threads, exp_json, out);
    }
    if (generate_cmd->parsed()) return cmd_generate(gen_spec, gen_out, gen_rows, gen_seed, gen_json, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace fairdisc::cli
