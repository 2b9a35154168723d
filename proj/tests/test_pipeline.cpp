#include <doctest.h>

#include <fstream>
#include <sstream>

#include "fairdisc/csv.hpp"
#include "fairdisc/error.hpp"
#include "fairdisc/pipeline.hpp"
#include "fixtures.hpp"

using namespace fairdisc;
using fixtures::error_kind;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.rows = 600;
  s.seed = 3;
  s.feature_dims = 3;
  s.group_offset = 2.0;
  s.label_signal = 0.5;
  s.schema = ProtectedSchema({{"a", {"a0", "a1"}}, {"b", {"b0", "b1"}}});
  const double t[2][2] = {{0.8, 0.6}, {0.5, 0.3}};
  for (GroupCode i = 0; i < 2; ++i) {
    for (GroupCode j = 0; j < 2; ++j) s.cells.push_back({Subgroup{{i, j}}, 0.25, t[i][j]});
  }
  return s;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.name = "tiny";
  c.synthetic = small_spec();
  MeasureSpec indep;
  indep.kind = MeasureKind::Independent;
  MeasureSpec inter;
  inter.kind = MeasureKind::Intersectional;
  c.measures = {indep, inter};
  c.ga.population_size = 30;
  c.ga.generations = 30;
  c.trials = 3;
  c.hyper.epochs = 50;
  c.hyper.hidden_units = 4;
  c.base_seed = 100;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("formatting") {
    CHECK(format_percent(0.16) == "16%");
    CHECK(format_percent(0.0) == "0%");
    CHECK(format_percent(0.245) == "25%");
    CHECK(format_percent(1.0) == "100%");
    CHECK(format_count(46.2) == "46.2");
    CHECK(format_count(4.0) == "4");
    CHECK(format_count(3.96) == "4");
    CHECK(format_count(10.04) == "10");
  }

  TEST_CASE("population statistics") {
    const Stat s = Stat::of({1.0, std::nullopt, 3.0});
    CHECK(s.defined == 2);
    CHECK(s.mean == 2.0);
    CHECK(s.std == 1.0);
    CHECK(s.min == 1.0);
    CHECK(s.max == 3.0);
    const Stat empty = Stat::of({std::nullopt});
    CHECK(empty.defined == 0);
    CHECK(empty.to_json()["mean"].is_null());
  }

  TEST_CASE("small experiment produces consistent records") {
    const auto cfg = small_config();
    const auto report = run_experiment(cfg);
    CHECK(report.dataset == "tiny");
    REQUIRE(report.trials.size() == 3);
    for (std::size_t t = 0; t < 3; ++t) {
      const auto& trial = report.trials[t];
      CHECK(trial.seed == 100 + t);
      REQUIRE(trial.measures.size() == 2);
      for (const auto& m : trial.measures) {
        CHECK(m.rows_train == 480);
        CHECK(m.rows_kept <= m.rows_train);
        CHECK(m.psi_train_after <= m.psi_train_before);
        CHECK(m.subgroups_after <= m.subgroups_before);
        REQUIRE(m.models.size() == 4);
        for (const auto& r : m.models) {
          CHECK(r.auroc >= 0.0);
          CHECK(r.auroc <= 1.0);
        }
      }
    }
    REQUIRE(report.aggregates.size() == 2);
    CHECK(report.aggregates[0].psi_train_before.defined == 3);
    CHECK(report.config.contains("trials"));
    CHECK_FALSE(report.config.contains("parallel"));
  }

  TEST_CASE("parallel trials give the same report") {
    auto cfg = small_config();
    cfg.trials = 2;
    const auto serial = run_experiment(cfg);
    cfg.parallel = true;
    cfg.threads = 2;
    CHECK(run_experiment(cfg).to_json() == serial.to_json());
  }

  TEST_CASE("report JSON round trip and tamper detection") {
    auto cfg = small_config();
    cfg.trials = 2;
    const auto report = run_experiment(cfg);
    const auto j = report.to_json();
    CHECK(ExperimentReport::from_json(j).to_json() == j);
    auto tampered = j;
    tampered["aggregates"][0]["psi_train_before"]["mean"] = 0.123456;
    CHECK(error_kind([&] { ExperimentReport::from_json(tampered); }) == ErrorKind::Data);
  }

  TEST_CASE("summary and scatter tables") {
    auto cfg = small_config();
    cfg.trials = 2;
    const auto report = run_experiment(cfg);
    const auto rows = summarize(report);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].dataset == "tiny");
    CHECK(rows[0].disc_before.back() == '%');
    const auto table = summary_table(rows);
    CHECK(table.header == std::vector<std::string>{"dataset", "measure", "disc_before", "disc_after",
                                                   "subgroups_before", "subgroups_after"});
    std::ostringstream text;
    csv::write(text, table);
    CHECK(parse_summary(csv::parse(text.str())) == rows);

    const auto scatter = scatter_table(report);
    CHECK(scatter.header.size() == 7);
    CHECK(scatter.rows.size() == 2 * 2 * 2);

    const auto dir = fixtures::scratch_dir("emit") / "nested";
    emit_report(report, dir);
    CHECK(std::filesystem::exists(dir / "summary.csv"));
    CHECK(std::filesystem::exists(dir / "scatter.csv"));
    const auto loaded = ExperimentReport::from_json(nlohmann::json::parse(slurp(dir / "report.json")));
    CHECK(loaded.to_json() == report.to_json());
  }

  TEST_CASE("empty report is refused") {
    ExperimentReport empty;
    CHECK(error_kind([&] { emit_report(empty, fixtures::scratch_dir("empty")); }) == ErrorKind::Data);
  }

  TEST_CASE("configuration loading and validation") {
    const auto cfg = ExperimentConfig::load(fixtures::config("experiment_synthetic.json"));
    CHECK(cfg.synthetic.has_value());
    CHECK(cfg.trials == 10);
    CHECK(cfg.measures.size() == 2);
    CHECK(cfg.load_dataset().rows() == cfg.synthetic->rows);

    auto bad = small_config();
    bad.test_fraction = 1.0;
    CHECK(error_kind([&] { bad.validate(); }) == ErrorKind::Configuration);
    bad = small_config();
    bad.synthetic.reset();
    CHECK(error_kind([&] { bad.validate(); }) == ErrorKind::Configuration);
    bad = small_config();
    bad.trials = 0;
    CHECK(error_kind([&] { bad.validate(); }) == ErrorKind::Configuration);
    CHECK(error_kind([] { ExperimentConfig::load("/nonexistent/exp.json"); }) == ErrorKind::Io);
  }

  TEST_CASE("running on an explicit dataset") {
    auto cfg = small_config();
    cfg.trials = 1;
    cfg.synthetic.reset();
    const Dataset ds = generate_synthetic(small_spec());
    const auto report = run_experiment(cfg, ds);
    CHECK(report.trials.size() == 1);
  }
}
