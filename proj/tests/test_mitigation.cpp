#include <doctest.h>

#include <algorithm>
#include <random>

#include "fairdisc/error.hpp"
#include "fairdisc/mitigation.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fairdisc;
using fixtures::error_kind;

namespace {

MeasureSpec intersectional() {
  MeasureSpec s;
  s.kind = MeasureKind::Intersectional;
  return s;
}

GAConfig small_ga(std::uint64_t seed) {
  GAConfig c;
  c.population_size = 60;
  c.generations = 80;
  c.seed = seed;
  return c;
}

SelectionMask random_mask(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::uint8_t> bits(n);
  for (auto& b : bits) b = rng() % 2;
  return SelectionMask(bits);
}

}  // namespace

TEST_SUITE("mitigation") {
  TEST_CASE("reference fitness on the worked example") {
    const Dataset ds = fixtures::table1();
    const auto spec = intersectional();
    CHECK(fitness(SelectionMask::all(4), ds, spec) == 1.0);
    CHECK(fitness(SelectionMask::from_indices(4, std::vector<std::size_t>{0, 3}), ds, spec) == 0.0);
    // One subgroup left: undefined under the zero policy.
    CHECK(fitness(SelectionMask::from_indices(4, std::vector<std::size_t>{0}), ds, spec) == kPenalty);
    CHECK(fitness(SelectionMask::none(4), ds, spec) == kPenalty);
    CHECK(fitness(SelectionMask::from_indices(4, std::vector<std::size_t>{0, 3}), ds, spec, 3) == kPenalty);
    CHECK(error_kind([&] { fitness(SelectionMask::all(3), ds, spec); }) == ErrorKind::ContractViolation);
  }

  TEST_CASE("optimal policy keeps lone-group selections feasible") {
    const Dataset ds = fixtures::table1();
    MeasureSpec spec = intersectional();
    spec.policy = SingleGroupPolicy::Optimal;
    CHECK(fitness(SelectionMask::from_indices(4, std::vector<std::size_t>{0}), ds, spec) == 0.0);
  }

  TEST_CASE("bitset evaluator agrees with the reference fitness") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 60; ++trial) {
      const bool cond = trial % 3 == 0;
      const Dataset ds = fixtures::random_dataset(rng, {2 + rng() % 2, 2 + rng() % 2}, 5 + rng() % 200, cond);
      MeasureSpec spec;
      spec.kind = static_cast<MeasureKind>(rng() % 5);
      spec.agg1 = static_cast<Aggregator>(rng() % 3);
      spec.agg2 = static_cast<Aggregator>(rng() % 3);
      spec.policy = static_cast<SingleGroupPolicy>(rng() % 3);
      spec.use_condition = cond;
      const std::size_t min_sub = rng() % 3;
      const FitnessEvaluator scalar(ds, spec, min_sub, simd::scalar_kernels());
      const FitnessEvaluator active(ds, spec, min_sub);
      for (int m = 0; m < 20; ++m) {
        const auto mask = random_mask(rng, ds.rows());
        const double expected = fitness(mask, ds, spec, min_sub);
        CHECK(scalar.evaluate(mask) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(active.evaluate(mask) == scalar.evaluate(mask));
        CHECK(scalar.unpack(scalar.pack(mask)) == mask);
      }
    }
  }

  TEST_CASE("lexicographic comparison follows original row order") {
    std::mt19937_64 rng(9);
    const Dataset ds = fixtures::random_dataset(rng, {3, 2}, 150);
    const FitnessEvaluator ev(ds, intersectional());
    for (int t = 0; t < 200; ++t) {
      const auto a = random_mask(rng, ds.rows());
      const auto b = t % 10 == 0 ? a : random_mask(rng, ds.rows());
      const auto expected = std::lexicographical_compare_three_way(a.bits().begin(), a.bits().end(),
                                                                b.bits().begin(), b.bits().end());
      const int got = ev.compare_lexicographic(ev.pack(a), ev.pack(b));
      CHECK((got < 0) == (expected < 0));
      CHECK((got == 0) == (expected == 0));
    }
  }

  TEST_CASE("ranking prefers lower fitness, then more rows, then smaller mask") {
    const auto a = SelectionMask::from_indices(4, std::vector<std::size_t>{1, 2});
    const auto b = SelectionMask::from_indices(4, std::vector<std::size_t>{0, 3});
    const auto c = SelectionMask::from_indices(4, std::vector<std::size_t>{0, 1, 3});
    CHECK(ranks_before(0.1, c, 0.2, a));
    CHECK(ranks_before(0.0, c, 0.0, a));
    CHECK(ranks_before(0.0, a, 0.0, b));
    CHECK_FALSE(ranks_before(0.0, a, 0.0, a));
  }

  TEST_CASE("brute force on the worked example") {
    const auto [mask, f] = brute_force_optimum(fixtures::table1(), intersectional());
    CHECK(f == 0.0);
    CHECK(mask.indices() == std::vector<std::size_t>{1, 2});
  }

  TEST_CASE("brute force refuses more than 20 rows") {
    std::mt19937_64 rng(1);
    const Dataset ds = fixtures::random_dataset(rng, {2, 2}, 21);
    CHECK(error_kind([&] { brute_force_optimum(ds, intersectional()); }) == ErrorKind::Capacity);
  }

  TEST_CASE("GA solves the worked example") {
    const Dataset ds = fixtures::table1();
    const auto r = mitigate(ds, intersectional(), small_ga(7));
    CHECK(r.psi_before == 1.0);
    CHECK(r.psi_after == 0.0);
    CHECK(r.rows_kept == 2);
    CHECK(r.mask.count() == 2);
    CHECK(r.subgroups_before == 4);
    CHECK(r.subgroups_after == 2);
  }

  TEST_CASE("already fair data keeps every row") {
    const Dataset ds = fixtures::make_dataset({{"a", "b"}, {"c", "d"}}, {{0, 0, 0, 0, 1, 1, 1, 1}, {0, 0, 1, 1, 0, 0, 1, 1}},
                                              {1, 0, 1, 0, 1, 0, 1, 0});
    const auto r = mitigate(ds, intersectional(), small_ga(3));
    CHECK(r.psi_after == 0.0);
    CHECK(r.rows_kept == ds.rows());
  }

  TEST_CASE("best fitness history is non-increasing and has G + 1 entries") {
    std::mt19937_64 rng(4);
    const Dataset ds = fixtures::random_dataset(rng, {3, 2}, 300);
    auto cfg = small_ga(11);
    std::vector<std::size_t> seen;
    cfg.progress = [&](std::size_t g, double) { seen.push_back(g); };
    const auto r = mitigate(ds, intersectional(), cfg);
    REQUIRE(r.best_fitness_history.size() == cfg.generations + 1);
    for (std::size_t g = 1; g < r.best_fitness_history.size(); ++g) {
      CHECK(r.best_fitness_history[g] <= r.best_fitness_history[g - 1]);
    }
    CHECK(r.best_fitness_history.back() == doctest::Approx(r.psi_after).epsilon(1e-12));
    CHECK(r.psi_after <= r.psi_before);
    CHECK(seen.size() == cfg.generations + 1);
  }

  TEST_CASE("results do not depend on parallel evaluation") {
    std::mt19937_64 rng(6);
    const Dataset ds = fixtures::random_dataset(rng, {2, 3}, 400);
    auto cfg = small_ga(5);
    const auto serial = mitigate(ds, intersectional(), cfg);
    cfg.parallel_fitness = true;
    cfg.threads = 4;
    const auto parallel = mitigate(ds, intersectional(), cfg);
    CHECK(serial.to_json() == parallel.to_json());
    cfg.seed = 6;
    CHECK(mitigate(ds, intersectional(), cfg).to_json() != serial.to_json());
  }

  TEST_CASE("min_subgroups keeps subgroups alive") {
    const Dataset ds = fixtures::table1();
    auto cfg = small_ga(2);
    cfg.min_subgroups = 3;
    const auto r = mitigate(ds, intersectional(), cfg);
    CHECK(r.subgroups_after >= 3);
  }

  TEST_CASE("JSON round trips") {
    const auto r = mitigate(fixtures::table1(), intersectional(), small_ga(1));
    const auto back = MitigationResult::from_json(r.to_json());
    CHECK(back.mask == r.mask);
    CHECK(back.to_json() == r.to_json());

    GAConfig cfg;
    cfg.mutation_rate = 0.01;
    cfg.elites = 4;
    CHECK(GAConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
    const auto overlay = GAConfig::from_json({{"generations", 5}}, cfg);
    CHECK(overlay.generations == 5);
    CHECK(overlay.elites == 4);
  }

  TEST_CASE("configuration errors") {
    GAConfig c;
    c.population_size = 0;
    CHECK(error_kind([&] { c.validate(); }) == ErrorKind::Configuration);
    c = GAConfig{};
    c.elites = c.population_size + 1;
    CHECK(error_kind([&] { c.validate(); }) == ErrorKind::Configuration);
    c = GAConfig{};
    c.mutation_rate = 1.5;
    CHECK(error_kind([&] { c.validate(); }) == ErrorKind::Configuration);
    const Dataset one = fixtures::make_dataset({{"a", "b"}}, {{0}}, {1});
    CHECK(error_kind([&] { mitigate(one, intersectional(), GAConfig{}); }) == ErrorKind::Data);
  }
}
