#include "fairdisc/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "fairdisc/error.hpp"
#include "fairdisc/kernels.hpp"

namespace fairdisc {

std::string_view to_string(ModelKind kind) noexcept {
  return kind == ModelKind::Logistic ? "logistic" : "mlp";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "logistic" || text == "lr") return ModelKind::Logistic;
  if (text == "mlp" || text == "ann") return ModelKind::Mlp;
  throw_error(ErrorKind::Configuration, "unknown model kind '" + std::string(text) + "'");
}

void HyperParams::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw_error(ErrorKind::Configuration, "learning_rate must be positive");
  }
  if (epochs == 0) throw_error(ErrorKind::Configuration, "epochs must be positive");
  if (!(l2 >= 0.0)) throw_error(ErrorKind::Configuration, "l2 must be non-negative");
  if (hidden_units == 0) throw_error(ErrorKind::Configuration, "hidden_units must be positive");
}

HyperParams HyperParams::from_json(const nlohmann::json& j) { return from_json(j, HyperParams{}); }

HyperParams HyperParams::from_json(const nlohmann::json& j, HyperParams h) {
  try {
    h.learning_rate = j.value("learning_rate", h.learning_rate);
    h.epochs = j.value("epochs", h.epochs);
    h.l2 = j.value("l2", h.l2);
    h.hidden_units = j.value("hidden_units", h.hidden_units);
    h.seed = j.value("seed", h.seed);
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::Configuration, std::string("hyper parameters: ") + e.what());
  }
  h.validate();
  return h;
}

nlohmann::json HyperParams::to_json() const {
  return {{"learning_rate", learning_rate},
          {"epochs", epochs},
          {"l2", l2},
          {"hidden_units", hidden_units},
          {"seed", seed}};
}

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  if (n == 0) return s;
  for (std::size_t c = 0; c < d; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) sum += x(r, c);
    const double mu = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) ss += (x(r, c) - mu) * (x(r, c) - mu);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    s.mean[c] = mu;
    // Relative threshold: a column that is constant up to rounding stays unscaled.
    s.scale[c] = sd > 1e-12 * std::max(1.0, std::abs(mu)) ? sd : 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.size()) {
    throw_error(ErrorKind::ContractViolation, "feature dimension " + std::to_string(x.cols()) +
                                                  " != model dimension " + std::to_string(mean.size()));
  }
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mean[c]) / scale[c];
  }
  return out;
}

std::size_t parameter_count(ModelKind kind, std::size_t d, std::size_t h) {
  return kind == ModelKind::Logistic ? d + 1 : h * d + h + h + 1;
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Views into a flat MLP parameter vector.
struct MlpView {
  std::size_t d, h;
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return h * d; }
  std::size_t w2() const { return h * d + h; }
  std::size_t b2() const { return h * d + 2 * h; }
};

// pre = b1 + sum_c x_c * W1[c, :], act = relu(pre)
void hidden_layer(const MlpView& v, std::span<const double> params, std::span<const double> x,
                  std::vector<double>& pre, std::vector<double>& act) {
  const auto b1 = params.subspan(v.b1(), v.h);
  std::copy(b1.begin(), b1.end(), pre.begin());
  for (std::size_t c = 0; c < v.d; ++c) simd::axpy(x[c], params.subspan(v.w1() + c * v.h, v.h), pre);
  for (std::size_t j = 0; j < v.h; ++j) act[j] = std::max(pre[j], 0.0);
}

void check_shapes(ModelKind kind, std::size_t hidden, std::span<const double> params, const Matrix& x) {
  if (params.size() != parameter_count(kind, x.cols(), hidden)) {
    throw_error(ErrorKind::ContractViolation, "parameter vector does not match the feature dimension");
  }
}

}  // namespace

double objective(ModelKind kind, std::size_t hidden, std::span<const double> params, const Matrix& x,
                 std::span<const std::uint8_t> y, double l2, std::vector<double>* gradient) {
  check_shapes(kind, hidden, params, x);
  if (y.size() != x.rows()) throw_error(ErrorKind::ContractViolation, "label count != row count");
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  if (gradient) gradient->assign(params.size(), 0.0);
  double loss = 0.0;

  if (kind == ModelKind::Logistic) {
    const auto w = params.first(d);
    const double b = params[d];
    for (std::size_t r = 0; r < n; ++r) {
      const double z = simd::dot(w, x.row(r)) + b;
      loss += softplus(z) - (y[r] ? z : 0.0);
      if (gradient) {
        const double delta = (sigmoid(z) - y[r]) * inv_n;
        simd::axpy(delta, x.row(r), std::span(*gradient).first(d));
        (*gradient)[d] += delta;
      }
    }
    loss *= inv_n;
    loss += 0.5 * l2 * simd::dot(w, w);
    if (gradient) simd::axpy(l2, w, std::span(*gradient).first(d));
    return loss;
  }

  const MlpView v{d, hidden};
  std::vector<double> pre(hidden);
  std::vector<double> act(hidden);
  std::vector<double> dh(hidden);
  const auto w2 = params.subspan(v.w2(), hidden);
  for (std::size_t r = 0; r < n; ++r) {
    const auto xr = x.row(r);
    hidden_layer(v, params, xr, pre, act);
    const double z = simd::dot(w2, act) + params[v.b2()];
    loss += softplus(z) - (y[r] ? z : 0.0);
    if (!gradient) continue;
    auto g = std::span(*gradient);
    const double delta = (sigmoid(z) - y[r]) * inv_n;
    simd::axpy(delta, act, g.subspan(v.w2(), hidden));
    g[v.b2()] += delta;
    for (std::size_t j = 0; j < hidden; ++j) dh[j] = pre[j] > 0.0 ? delta * w2[j] : 0.0;
    for (std::size_t c = 0; c < d; ++c) simd::axpy(xr[c], dh, g.subspan(v.w1() + c * hidden, hidden));
    simd::axpy(1.0, dh, g.subspan(v.b1(), hidden));
  }
  loss *= inv_n;
  const auto w1 = params.subspan(v.w1(), hidden * d);
  loss += 0.5 * l2 * (simd::dot(w1, w1) + simd::dot(w2, w2));
  if (gradient) {
    simd::axpy(l2, w1, std::span(*gradient).subspan(v.w1(), hidden * d));
    simd::axpy(l2, w2, std::span(*gradient).subspan(v.w2(), hidden));
  }
  return loss;
}

std::vector<double> forward(ModelKind kind, std::size_t hidden, std::span<const double> params, const Matrix& x) {
  check_shapes(kind, hidden, params, x);
  const std::size_t d = x.cols();
  std::vector<double> out(x.rows());
  if (kind == ModelKind::Logistic) {
    for (std::size_t r = 0; r < x.rows(); ++r) out[r] = sigmoid(simd::dot(params.first(d), x.row(r)) + params[d]);
    return out;
  }
  const MlpView v{d, hidden};
  std::vector<double> pre(hidden);
  std::vector<double> act(hidden);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    hidden_layer(v, params, x.row(r), pre, act);
    out[r] = sigmoid(simd::dot(params.subspan(v.w2(), hidden), act) + params[v.b2()]);
  }
  return out;
}

std::vector<double> TrainedModel::predict_proba(const Matrix& features) const {
  if (features.cols() != feature_dim) {
    throw_error(ErrorKind::ContractViolation, "feature dimension " + std::to_string(features.cols()) +
                                                  " != model dimension " + std::to_string(feature_dim));
  }
  return forward(kind, hidden_units, parameters, standardizer.apply(features));
}

std::vector<double> predict_proba(const TrainedModel& model, const Matrix& features) {
  return model.predict_proba(features);
}

nlohmann::json TrainedModel::to_json() const {
  return {{"kind", to_string(kind)},
          {"feature_dim", feature_dim},
          {"hidden_units", hidden_units},
          {"parameters", parameters},
          {"mean", standardizer.mean},
          {"scale", standardizer.scale},
          {"epochs", epochs},
          {"learning_rate", learning_rate},
          {"final_loss", final_loss}};
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
  TrainedModel m;
  try {
    m.kind = parse_model_kind(j.at("kind").get<std::string>());
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    m.hidden_units = j.value("hidden_units", std::size_t{0});
    m.parameters = j.at("parameters").get<std::vector<double>>();
    m.standardizer.mean = j.at("mean").get<std::vector<double>>();
    m.standardizer.scale = j.at("scale").get<std::vector<double>>();
    m.epochs = j.value("epochs", std::size_t{0});
    m.learning_rate = j.value("learning_rate", 0.0);
    m.final_loss = j.value("final_loss", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::Data, std::string("model: ") + e.what());
  }
  if (m.parameters.size() != parameter_count(m.kind, m.feature_dim, m.hidden_units) ||
      m.standardizer.mean.size() != m.feature_dim || m.standardizer.scale.size() != m.feature_dim) {
    throw_error(ErrorKind::Data, "model: parameter shapes do not match feature_dim");
  }
  return m;
}

void TrainedModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw_error(ErrorKind::Io, "cannot write " + path.string());
  out << to_json().dump(2) << '\n';
  if (!out) throw_error(ErrorKind::Io, "write failed: " + path.string());
}

TrainedModel TrainedModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw_error(ErrorKind::Data, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw e.annotated(path.string());
  }
}

TrainedModel train(ModelKind kind, const Matrix& features, std::span<const std::uint8_t> labels,
                   const HyperParams& hyper) {
  hyper.validate();
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (n == 0) throw_error(ErrorKind::Training, "training set is empty");
  if (labels.size() != n) throw_error(ErrorKind::ContractViolation, "label count != row count");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  if (positives == 0 || positives == n) {
    throw_error(ErrorKind::Training, "training set contains a single outcome class");
  }

  TrainedModel m;
  m.kind = kind;
  m.feature_dim = d;
  m.hidden_units = kind == ModelKind::Mlp ? hyper.hidden_units : 0;
  m.epochs = hyper.epochs;
  m.learning_rate = hyper.learning_rate;
  m.standardizer = Standardizer::fit(features);
  const Matrix x = m.standardizer.apply(features);

  m.parameters.assign(parameter_count(kind, d, m.hidden_units), 0.0);
  if (kind == ModelKind::Mlp) {
    // He initialisation for the ReLU layer; biases start at zero.
    std::mt19937_64 rng(hyper.seed);
    const MlpView v{d, m.hidden_units};
    std::normal_distribution<double> hidden_init(0.0, std::sqrt(2.0 / static_cast<double>(std::max<std::size_t>(d, 1))));
    std::normal_distribution<double> output_init(0.0, std::sqrt(1.0 / static_cast<double>(m.hidden_units)));
    for (std::size_t i = 0; i < m.hidden_units * d; ++i) m.parameters[v.w1() + i] = hidden_init(rng);
    for (std::size_t j = 0; j < m.hidden_units; ++j) m.parameters[v.w2() + j] = output_init(rng);
  }

  std::vector<double> grad;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    objective(kind, m.hidden_units, m.parameters, x, labels, hyper.l2, &grad);
    simd::axpy(-hyper.learning_rate, grad, m.parameters);
  }
  m.final_loss = objective(kind, m.hidden_units, m.parameters, x, labels, hyper.l2);
  if (!std::isfinite(m.final_loss)) throw_error(ErrorKind::Training, "training diverged");
  return m;
}

TrainedModel train(ModelKind kind, const Dataset& dataset, const HyperParams& hyper) {
  return train(kind, dataset.features(), dataset.outcome(), hyper);
}

std::vector<std::uint8_t> binarize(std::span<const double> scores, double threshold) {
  std::vector<std::uint8_t> out(scores.size());
  std::transform(scores.begin(), scores.end(), out.begin(),
                 [threshold](double s) { return static_cast<std::uint8_t>(s >= threshold ? 1 : 0); });
  return out;
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw_error(ErrorKind::ContractViolation, "score count != label count");
  const std::size_t n = scores.size();
  if (std::any_of(scores.begin(), scores.end(), [](double s) { return std::isnan(s); })) {
    throw_error(ErrorKind::ContractViolation, "AUROC scores contain NaN");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 1-based ranks of positives, tied blocks sharing their average rank.
  // Ranks are doubled so every value stays an integer.
  std::uint64_t twice_rank_sum = 0;
  std::uint64_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t twice_avg = static_cast<std::uint64_t>(i + 1 + j);  // (i+1) + j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        twice_rank_sum += twice_avg;
        ++pos;
      }
    }
    i = j;
  }
  const std::uint64_t neg = n - pos;
  if (pos == 0 || neg == 0) throw_error(ErrorKind::MetricUndefined, "AUROC needs both outcome classes");
  // U = rank_sum - pos (pos + 1) / 2
  const std::uint64_t twice_u = twice_rank_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace fairdisc
