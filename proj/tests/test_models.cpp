#include <doctest.h>

#include <cmath>
#include <random>

#include "fairdisc/error.hpp"
#include "fairdisc/models.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fairdisc;
using fixtures::error_kind;

namespace {

struct Toy {
  Matrix x;
  std::vector<std::uint8_t> y;
};

// Two Gaussian blobs in d dimensions, separated along every axis.
Toy blobs(std::mt19937_64& rng, std::size_t n, std::size_t d, double gap) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Toy t{Matrix(n, d), std::vector<std::uint8_t>(n)};
  for (std::size_t r = 0; r < n; ++r) {
    t.y[r] = r % 2;
    for (std::size_t c = 0; c < d; ++c) t.x(r, c) = normal(rng) + (t.y[r] ? gap : -gap);
  }
  return t;
}

void check_gradient(ModelKind kind, std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Toy t = blobs(rng, 30, 3, 0.5);
  std::normal_distribution<double> normal(0.0, 0.5);
  std::vector<double> params(parameter_count(kind, 3, hidden));
  for (auto& p : params) p = normal(rng);
  const double l2 = 0.01;
  std::vector<double> grad;
  objective(kind, hidden, params, t.x, t.y, l2, &grad);
  const auto numeric = oracle::numeric_gradient(
      [&](const std::vector<double>& p) { return objective(kind, hidden, p, t.x, t.y, l2); }, params);
  CHECK(oracle::relative_error(grad, numeric) <= 1e-6);
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("parameter counts") {
    CHECK(parameter_count(ModelKind::Logistic, 5, 32) == 6);
    CHECK(parameter_count(ModelKind::Mlp, 5, 4) == 5 * 4 + 4 + 4 + 1);
    CHECK(parse_model_kind("lr") == ModelKind::Logistic);
    CHECK(parse_model_kind("ann") == ModelKind::Mlp);
    CHECK(error_kind([] { parse_model_kind("svm"); }) == ErrorKind::Configuration);
  }

  TEST_CASE("analytic gradients match finite differences") {
    check_gradient(ModelKind::Logistic, 0, 1);
    check_gradient(ModelKind::Mlp, 5, 2);
    check_gradient(ModelKind::Mlp, 1, 3);
  }

  TEST_CASE("separable data is fitted perfectly") {
    std::mt19937_64 rng(10);
    const Toy t = blobs(rng, 200, 2, 4.0);
    for (auto kind : {ModelKind::Logistic, ModelKind::Mlp}) {
      HyperParams h;
      h.hidden_units = 8;
      const auto m = train(kind, t.x, t.y, h);
      const auto pred = binarize(m.predict_proba(t.x));
      CHECK(pred == t.y);
      CHECK(auroc(m.predict_proba(t.x), t.y) == 1.0);
    }
  }

  TEST_CASE("training loss decreases") {
    std::mt19937_64 rng(12);
    const Toy t = blobs(rng, 100, 3, 0.3);
    HyperParams h;
    const auto m = train(ModelKind::Logistic, t.x, t.y, h);
    const std::vector<double> zero(parameter_count(ModelKind::Logistic, 3, 0), 0.0);
    const double start = objective(ModelKind::Logistic, 0, zero, m.standardizer.apply(t.x), t.y, h.l2);
    CHECK(m.final_loss < start);
  }

  TEST_CASE("constant features: bias tends to the logit of the base rate") {
    Matrix x(100, 2, 3.0);
    std::vector<std::uint8_t> y(100, 0);
    for (std::size_t r = 0; r < 30; ++r) y[r] = 1;
    HyperParams h;
    h.epochs = 3000;
    h.learning_rate = 0.5;
    const auto m = train(ModelKind::Logistic, x, y, h);
    CHECK(m.standardizer.scale == std::vector<double>{1.0, 1.0});
    CHECK(m.parameters.back() == doctest::Approx(std::log(0.3 / 0.7)).epsilon(1e-4));
    for (double p : m.predict_proba(x)) CHECK(p == doctest::Approx(0.3).epsilon(1e-4));
  }

  TEST_CASE("training is deterministic for a seed") {
    std::mt19937_64 rng(14);
    const Toy t = blobs(rng, 80, 3, 1.0);
    HyperParams h;
    h.hidden_units = 6;
    h.seed = 42;
    const auto a = train(ModelKind::Mlp, t.x, t.y, h);
    const auto b = train(ModelKind::Mlp, t.x, t.y, h);
    CHECK(a.parameters == b.parameters);
    h.seed = 43;
    CHECK(train(ModelKind::Mlp, t.x, t.y, h).parameters != a.parameters);
  }

  TEST_CASE("binarize uses >= threshold") {
    const std::vector<double> s = {0.1, 0.5, 0.49, 0.9};
    CHECK(binarize(s) == std::vector<std::uint8_t>{0, 1, 0, 1});
    CHECK(binarize(s, 0.9) == std::vector<std::uint8_t>{0, 0, 0, 1});
  }

  TEST_CASE("AUROC examples") {
    const std::vector<std::uint8_t> y = {0, 0, 1, 1};
    CHECK(auroc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, y) == 0.75);
    CHECK(auroc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y) == 0.5);
    CHECK(auroc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y) == 0.0);
    CHECK(error_kind([&] { auroc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}); }) ==
          ErrorKind::MetricUndefined);
    CHECK(error_kind([&] { auroc(std::vector<double>{NAN, 0.2}, std::vector<std::uint8_t>{1, 0}); }) ==
          ErrorKind::ContractViolation);
  }

  TEST_CASE("AUROC matches pair counting and is invariant to monotone maps") {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 2 + rng() % 80;
      std::vector<double> s(n);
      std::vector<std::uint8_t> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng() % 10) / 10.0;  // plenty of ties
        y[i] = rng() % 2;
      }
      y[0] = 0;
      y[1] = 1;
      const double a = auroc(s, y);
      CHECK(a == doctest::Approx(oracle::auroc_pairs(s, y)).epsilon(1e-12));
      std::vector<double> mapped(n), flipped(n);
      std::vector<std::uint8_t> inv(n);
      for (std::size_t i = 0; i < n; ++i) {
        mapped[i] = 3.0 * s[i] + 7.0;
        flipped[i] = -s[i];
        inv[i] = 1 - y[i];
      }
      CHECK(auroc(mapped, y) == a);
      CHECK(auroc(flipped, inv) == doctest::Approx(a).epsilon(1e-12));
    }
  }

  TEST_CASE("predictions are invariant to affine feature rescaling") {
    std::mt19937_64 rng(16);
    const Toy t = blobs(rng, 120, 3, 0.8);
    Matrix scaled = t.x;
    for (std::size_t r = 0; r < scaled.rows(); ++r) {
      for (std::size_t c = 0; c < scaled.cols(); ++c) scaled(r, c) = 4.0 * scaled(r, c) + 100.0;
    }
    HyperParams h;
    const auto a = train(ModelKind::Logistic, t.x, t.y, h).predict_proba(t.x);
    const auto b = train(ModelKind::Logistic, scaled, t.y, h).predict_proba(scaled);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));
  }

  TEST_CASE("save and load reproduce predictions") {
    std::mt19937_64 rng(17);
    const Toy t = blobs(rng, 60, 4, 1.0);
    HyperParams h;
    h.hidden_units = 5;
    const auto m = train(ModelKind::Mlp, t.x, t.y, h);
    const auto path = fixtures::scratch_dir("model") / "m.json";
    m.save(path);
    const auto back = TrainedModel::load(path);
    CHECK(back.predict_proba(t.x) == m.predict_proba(t.x));
    CHECK(back.to_json() == m.to_json());
  }

  TEST_CASE("training errors") {
    HyperParams h;
    CHECK(error_kind([&] { train(ModelKind::Logistic, Matrix(0, 2), std::vector<std::uint8_t>{}, h); }) ==
          ErrorKind::Training);
    CHECK(error_kind([&] { train(ModelKind::Logistic, Matrix(3, 2), std::vector<std::uint8_t>{1, 1, 1}, h); }) ==
          ErrorKind::Training);
    h.learning_rate = -1.0;
    CHECK(error_kind([&] { h.validate(); }) == ErrorKind::Configuration);
    const auto m = train(ModelKind::Logistic, Matrix(2, 2), std::vector<std::uint8_t>{0, 1}, HyperParams{});
    CHECK(error_kind([&] { m.predict_proba(Matrix(2, 3)); }) == ErrorKind::ContractViolation);
  }

  TEST_CASE("training on a dataset uses its features and outcome") {
    std::mt19937_64 rng(18);
    const Dataset ds = fixtures::random_dataset(rng, {2, 2}, 50);
    const auto m = train(ModelKind::Logistic, ds, HyperParams{});
    CHECK(m.feature_dim == 1);
    CHECK(predict_proba(m, ds.features()).size() == 50);
  }
}
