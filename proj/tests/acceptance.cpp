// Acceptance harness: one line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fairdisc/error.hpp"
#include "fairdisc/measures.hpp"
#include "fairdisc/mitigation.hpp"
#include "fairdisc/models.hpp"
#include "fairdisc/pipeline.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fairdisc;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

MeasureSpec spec_of(MeasureKind kind) {
  MeasureSpec s;
  s.kind = kind;
  return s;
}

Outcome worked_example() {
  const auto t0 = Clock::now();
  const Dataset ds = fixtures::table1();
  const double inter = measure(ds, spec_of(MeasureKind::Intersectional));
  const double indep = measure(ds, spec_of(MeasureKind::Independent));
  bool ok = inter == 1.0 && indep == 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    for (double p : treatment_table(ds, k).probabilities()) ok = ok && p == 0.5;
  }
  ok = ok && treatment_table(ds, std::nullopt).probabilities() == std::vector<double>{1.0, 0.0, 0.0, 1.0};
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 1.0;
  return {ok ? Verdict::Pass : Verdict::Fail,
          fmt("intersect=%.17g indep=%.17g time=%.3fs", inter, indep, elapsed)};
}

Outcome max_form() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t groups = 2 + rng() % 9;
    // Enough rows that every group appears.
    const Dataset ds = fixtures::random_dataset(rng, {groups}, groups * 20);
    const auto table = treatment_table(ds, std::size_t{0}).probabilities();
    const auto [lo, hi] = std::minmax_element(table.begin(), table.end());
    const double range = *hi - *lo;
    worst = std::max(worst, std::abs(aggregate_pairwise(table, Aggregator::Max) - range));
    worst = std::max(worst, std::abs(oracle::pairwise(table, Aggregator::Max) - range));
  }
  return {worst <= 1e-12 ? Verdict::Pass : Verdict::Fail, fmt("max |pairwise - range| = %.3g", worst)};
}

Outcome dominance() {
  std::mt19937_64 rng(77);
  std::size_t violations = 0;
  std::size_t compared = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t p = 2 + rng() % 2;
    std::vector<std::size_t> groups(p);
    for (auto& g : groups) g = 2 + rng() % 3;
    const Dataset ds = fixtures::random_dataset(rng, groups, 20 + rng() % 181);
    try {
      const double inter = measure(ds, spec_of(MeasureKind::Intersectional));
      const double indep = measure(ds, spec_of(MeasureKind::Independent));
      ++compared;
      if (indep > inter) ++violations;
    } catch (const Error&) {
    }
  }
  return {violations == 0 ? Verdict::Pass : Verdict::Fail,
          fmt("%zu violations over %zu defined datasets", violations, compared)};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(4242);
  std::size_t matched = 0;
  double slowest = 0.0;
  const auto spec = spec_of(MeasureKind::Intersectional);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 4 + rng() % 9;
    const Dataset ds = fixtures::random_dataset(rng, {2, 2}, n);
    GAConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(t);
    const auto t0 = Clock::now();
    const auto result = mitigate(ds, spec, cfg);
    slowest = std::max(slowest, seconds_since(t0));
    const auto [mask, best] = brute_force_optimum(ds, spec);
    const double got = fitness(result.mask, ds, spec);
    if (std::abs(got - best) <= 1e-12) ++matched;
  }
  const bool ok = matched >= 95 && slowest < 5.0;
  return {ok ? Verdict::Pass : Verdict::Fail, fmt("%zu/100 optimal, slowest %.2fs", matched, slowest)};
}

Outcome planted_bias() {
  auto spec = SyntheticSpec::load(fixtures::config("synthetic_2x2.json"));
  spec.rows = 20000;
  const Dataset ds = generate_synthetic(spec);
  const auto t0 = Clock::now();
  GAConfig cfg;
  cfg.seed = 1;
  cfg.parallel_fitness = true;
  const auto r = mitigate(ds, spec_of(MeasureKind::Intersectional), cfg);
  const double elapsed = seconds_since(t0);
  const double kept = static_cast<double>(r.rows_kept) / static_cast<double>(ds.rows());
  const bool ok = std::abs(r.psi_before - 0.30) <= 0.02 && r.psi_after <= 0.05 && kept >= 0.5 && elapsed < 120.0;
  return {ok ? Verdict::Pass : Verdict::Fail,
          fmt("psi %.4f -> %.4f, kept %.1f%%, time %.1fs", r.psi_before, r.psi_after, 100 * kept, elapsed)};
}

const ModelAggregate* find_model(const MeasureAggregate& m, ModelKind kind, const std::string& data) {
  for (const auto& a : m.models) {
    if (a.model == kind && a.data == data) return &a;
  }
  return nullptr;
}

Outcome tradeoff() {
  auto cfg = ExperimentConfig::load(fixtures::config("experiment_synthetic.json"));
  cfg.trials = 10;
  cfg.parallel = true;
  const auto report = run_experiment(cfg);
  const MeasureAggregate* inter = nullptr;
  for (const auto& a : report.aggregates) {
    if (a.measure.rfind("intersectional", 0) == 0) inter = &a;
  }
  if (!inter) return {Verdict::Fail, "no intersectional measure in the experiment"};
  bool ok = true;
  std::string detail;
  for (auto kind : {ModelKind::Logistic, ModelKind::Mlp}) {
    const auto* orig = find_model(*inter, kind, "original");
    const auto* fair = find_model(*inter, kind, "fair");
    if (!orig || !fair || fair->psi_predictions.defined == 0 || orig->psi_predictions.defined == 0) {
      return {Verdict::Fail, "missing model results"};
    }
    const double auroc_drop = orig->auroc.mean - fair->auroc.mean;
    const double psi_drop = orig->psi_predictions.mean - fair->psi_predictions.mean;
    ok = ok && auroc_drop <= 0.03 && psi_drop >= 0.15;
    detail += fmt("%s: auroc %.3f->%.3f psi %.3f->%.3f; ", std::string(to_string(kind)).c_str(), orig->auroc.mean,
                  fair->auroc.mean, orig->psi_predictions.mean, fair->psi_predictions.mean);
  }
  return {ok ? Verdict::Pass : Verdict::Fail, detail};
}

Outcome public_datasets() {
  const char* env = std::getenv("FAIRDISC_DATA_DIR");
  if (!env) return {Verdict::Skip, "FAIRDISC_DATA_DIR not set"};
  const std::filesystem::path dir(env);
  const std::vector<std::string> names = {"adult", "bank", "compas"};
  double total_reduction = 0.0;
  std::size_t pairs = 0;
  bool every_reduced = true;
  double worst_retention = 1.0;
  std::string detail;
  for (const auto& name : names) {
    auto cfg = ExperimentConfig::load(fixtures::config("experiment_" + name + ".json"));
    cfg.data = dir / cfg.data->filename();
    if (!std::filesystem::exists(*cfg.data)) return {Verdict::Skip, "missing " + cfg.data->string()};
    cfg.parallel = true;
    const auto report = run_experiment(cfg);
    for (const auto& trial : report.trials) {
      for (const auto& m : trial.measures) {
        worst_retention = std::min(worst_retention, static_cast<double>(m.subgroups_after) /
                                                        static_cast<double>(m.subgroups_before));
      }
    }
    for (const auto& a : report.aggregates) {
      const double drop = a.psi_train_before.mean - a.psi_train_after.mean;
      every_reduced = every_reduced && drop > 0.0;
      total_reduction += drop;
      ++pairs;
      detail += fmt("%s/%s %s->%s; ", name.c_str(), a.measure.c_str(), format_percent(a.psi_train_before.mean).c_str(),
                    format_percent(a.psi_train_after.mean).c_str());
    }
  }
  const double mean_reduction = total_reduction / static_cast<double>(pairs);
  const bool ok = every_reduced && mean_reduction >= 0.20 && worst_retention >= 0.80;
  detail += fmt("mean reduction %.1fpp, worst subgroup retention %.1f%%", 100 * mean_reduction, 100 * worst_retention);
  return {ok ? Verdict::Pass : Verdict::Fail, detail};
}

std::string report_bytes(const ExperimentConfig& cfg, const std::string& tag) {
  const auto dir = fixtures::scratch_dir("acceptance_" + tag);
  emit_report(run_experiment(cfg), dir);
  std::ifstream in(dir / "report.json", std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  auto cfg = ExperimentConfig::load(fixtures::config("experiment_synthetic.json"));
  cfg.trials = 3;
  cfg.parallel = false;
  const auto serial_a = report_bytes(cfg, "serial_a");
  const auto serial_b = report_bytes(cfg, "serial_b");
  cfg.parallel = true;
  cfg.ga.parallel_fitness = true;
  const auto parallel_a = report_bytes(cfg, "parallel_a");
  const auto parallel_b = report_bytes(cfg, "parallel_b");
  const bool ok = !serial_a.empty() && serial_a == serial_b && serial_a == parallel_a && parallel_a == parallel_b;
  return {ok ? Verdict::Pass : Verdict::Fail, fmt("report.json %zu bytes, 4 runs compared", serial_a.size())};
}

Outcome numerics() {
  std::string failures;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(40, 3);
  std::vector<std::uint8_t> y(40);
  for (std::size_t r = 0; r < 40; ++r) {
    y[r] = r % 2;
    for (std::size_t c = 0; c < 3; ++c) x(r, c) = normal(rng) + (y[r] ? 0.5 : -0.5);
  }
  double worst_gradient = 0.0;
  for (auto [kind, hidden] : {std::pair{ModelKind::Logistic, std::size_t{0}}, std::pair{ModelKind::Mlp, std::size_t{6}}}) {
    std::vector<double> params(parameter_count(kind, 3, hidden));
    for (auto& p : params) p = 0.5 * normal(rng);
    std::vector<double> grad;
    objective(kind, hidden, params, x, y, 0.01, &grad);
    const auto numeric = oracle::numeric_gradient(
        [&](const std::vector<double>& p) { return objective(kind, hidden, p, x, y, 0.01); }, params);
    worst_gradient = std::max(worst_gradient, oracle::relative_error(grad, numeric));
  }
  if (worst_gradient > 1e-6) failures += "gradient ";
  const double a = auroc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<std::uint8_t>{0, 0, 1, 1});
  if (a != 0.75) failures += "auroc ";
  const double mi = measure(fixtures::table1(), spec_of(MeasureKind::MutualInformation));
  if (mi != 1.0) failures += "mi-table1 ";
  const Dataset indep = fixtures::make_dataset({{"a", "b"}, {"c", "d"}},
                                               {{0, 0, 0, 0, 1, 1, 1, 1}, {0, 0, 1, 1, 0, 0, 1, 1}},
                                               {1, 0, 1, 0, 1, 0, 1, 0});
  const double mi0 = measure(indep, spec_of(MeasureKind::MutualInformation));
  if (mi0 != 0.0) failures += "mi-independent ";
  return {failures.empty() ? Verdict::Pass : Verdict::Fail,
          fmt("gradient rel err %.2e, auroc %.17g, MI %.17g / %.17g %s", worst_gradient, a, mi, mi0, failures.c_str())};
}

}  // namespace

// Optional arguments pick criteria by number, e.g. `acceptance 5 6`.
int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"worked example: intersectional 1, independent 0, treatments", worked_example},
      {"pairwise max equals max - min on 1000 tables", max_form},
      {"independent <= intersectional on 500 random datasets", dominance},
      {"GA reaches the exhaustive optimum on >= 95/100 small datasets", oracle_equivalence},
      {"planted 0.30 disparity recovered and mitigated on 20000 rows", planted_bias},
      {"fair-data models: AUROC drop <= 0.03, prediction psi drop >= 0.15", tradeoff},
      {"public-dataset reduction (needs FAIRDISC_DATA_DIR)", public_datasets},
      {"byte-identical report.json across runs and parallel modes", determinism},
      {"gradients, AUROC and mutual information exact checks", numerics},
  };
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int a = 1; a < argc; ++a) {
    const int k = std::atoi(argv[a]);
    if (k >= 1 && static_cast<std::size_t>(k) <= criteria.size()) selected[static_cast<std::size_t>(k - 1)] = true;
  }
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
    if (o.verdict == Verdict::Fail) ++failed;
    std::cout << '[' << tag << "] " << (i + 1) << ' ' << criteria[i].first << " (" << o.detail << ", "
              << fmt("%.1fs", seconds_since(t0)) << ")\n"
              << std::flush;
  }
  return failed == 0 ? 0 : 1;
}
