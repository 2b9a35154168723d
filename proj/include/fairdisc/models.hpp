#pragma once

// Baseline classifiers (logistic regression and a one-hidden-layer MLP)
// trained by full-batch gradient descent, plus AUROC and thresholding.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fairdisc/data.hpp"
#include "fairdisc/matrix.hpp"

namespace fairdisc {

enum class ModelKind { Logistic, Mlp };

std::string_view to_string(ModelKind kind) noexcept;
ModelKind parse_model_kind(std::string_view text);

struct HyperParams {
  double learning_rate = 0.1;
  std::size_t epochs = 200;
  double l2 = 1e-4;
  std::size_t hidden_units = 32;  // mlp only
  std::uint64_t seed = 0;

  void validate() const;
  static HyperParams from_json(const nlohmann::json& j);
  static HyperParams from_json(const nlohmann::json& j, HyperParams base);
  nlohmann::json to_json() const;
};

/// Per-column affine map to zero mean, unit variance. Constant columns keep
/// scale 1 so they map to 0.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
};

/// Flat parameter layout.
///   logistic: w[d], b
///   mlp:      W1[d*h] (one row of h weights per input feature), b1[h], w2[h], b2
std::size_t parameter_count(ModelKind kind, std::size_t feature_dim, std::size_t hidden_units);

/// Mean log loss plus (l2 / 2) * ||weights||^2 (biases are not penalised) on
/// already-standardised inputs. Writes the gradient when `gradient` is given.
double objective(ModelKind kind, std::size_t hidden_units, std::span<const double> params, const Matrix& x,
                 std::span<const std::uint8_t> y, double l2, std::vector<double>* gradient = nullptr);

/// Probabilities for already-standardised inputs.
std::vector<double> forward(ModelKind kind, std::size_t hidden_units, std::span<const double> params,
                            const Matrix& x);

struct TrainedModel {
  ModelKind kind = ModelKind::Logistic;
  std::size_t feature_dim = 0;
  std::size_t hidden_units = 0;
  std::vector<double> parameters;
  Standardizer standardizer;
  std::size_t epochs = 0;
  double learning_rate = 0.0;
  double final_loss = 0.0;

  std::vector<double> predict_proba(const Matrix& features) const;

  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static TrainedModel load(const std::filesystem::path& path);
};

TrainedModel train(ModelKind kind, const Matrix& features, std::span<const std::uint8_t> labels,
                   const HyperParams& hyper);
TrainedModel train(ModelKind kind, const Dataset& dataset, const HyperParams& hyper);

std::vector<double> predict_proba(const TrainedModel& model, const Matrix& features);

/// 1 where score >= threshold.
std::vector<std::uint8_t> binarize(std::span<const double> scores, double threshold = 0.5);

/// Mann-Whitney statistic from average ranks; ties count one half.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

}  // namespace fairdisc
