#pragma once

// Repeated-trial experiment: split, mitigate the training part, train models
// on original and mitigated data, evaluate on the untouched test part.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairdisc/data.hpp"
#include "fairdisc/measures.hpp"
#include "fairdisc/mitigation.hpp"
#include "fairdisc/models.hpp"

namespace fairdisc {

struct ExperimentConfig {
  std::string name;  // dataset label in summaries; defaults to the data file stem
  // Either a CSV with its dataset config, or a synthetic spec.
  std::optional<std::filesystem::path> data;
  std::optional<DatasetConfig> dataset_config;
  std::optional<SyntheticSpec> synthetic;

  std::vector<MeasureSpec> measures;
  GAConfig ga;
  std::size_t trials = 10;
  double test_fraction = 0.2;
  std::vector<ModelKind> models = {ModelKind::Logistic, ModelKind::Mlp};
  HyperParams hyper;
  std::filesystem::path output_dir = "results";
  std::uint64_t base_seed = 0;
  bool parallel = false;  // run trials concurrently
  std::size_t threads = 0;

  /// `require_source`: exactly one of `data` and `synthetic` must be set.
  void validate(bool require_source = true) const;
  /// Relative paths in `j` are resolved against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  Dataset load_dataset() const;
};

struct ModelRecord {
  ModelKind model = ModelKind::Logistic;
  std::string data;  // "original" or "fair"
  double auroc = 0.0;
  std::optional<double> psi_predictions;  // empty when undefined on the predictions
};

struct MeasureRecord {
  std::string measure;
  double psi_train_before = 0.0;
  double psi_train_after = 0.0;
  std::size_t subgroups_before = 0;
  std::size_t subgroups_after = 0;
  std::size_t rows_train = 0;
  std::size_t rows_kept = 0;
  std::optional<double> psi_test_labels;
  std::vector<ModelRecord> models;
};

struct TrialRecord {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::string split_strategy;
  std::uint64_t test_hash = 0;
  std::vector<MeasureRecord> measures;
};

/// Summary statistics over the defined per-trial values; std is the
/// population standard deviation.
struct Stat {
  std::vector<std::optional<double>> values;  // one per trial
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t defined = 0;

  static Stat of(std::vector<std::optional<double>> values);
  nlohmann::json to_json() const;
};

struct ModelAggregate {
  ModelKind model = ModelKind::Logistic;
  std::string data;
  Stat auroc;
  Stat psi_predictions;
};

struct MeasureAggregate {
  std::string measure;
  Stat psi_train_before;
  Stat psi_train_after;
  Stat subgroups_before;
  Stat subgroups_after;
  Stat psi_test_labels;
  std::vector<ModelAggregate> models;
};

struct ExperimentReport {
  std::string dataset;
  nlohmann::json config;
  std::vector<TrialRecord> trials;
  std::vector<MeasureAggregate> aggregates;

  /// Recomputes `aggregates` from `trials`.
  void aggregate();
  nlohmann::json to_json() const;
  /// Rejects reports whose stored aggregates disagree with their trials.
  static ExperimentReport from_json(const nlohmann::json& j);
};

ExperimentReport run_experiment(const ExperimentConfig& config);
ExperimentReport run_experiment(const ExperimentConfig& config, const Dataset& dataset);

struct SummaryRow {
  std::string dataset;
  std::string measure;
  std::string disc_before;       // "24%"
  std::string disc_after;        // "5%"
  std::string subgroups_before;  // "46.2"
  std::string subgroups_after;

  friend bool operator==(const SummaryRow&, const SummaryRow&) = default;
};

std::string format_percent(double value);
std::string format_count(double value);

std::vector<SummaryRow> summarize(const ExperimentReport& report);
csv::Table summary_table(const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> parse_summary(const csv::Table& table);

/// One row per (model, data, measure).
csv::Table scatter_table(const ExperimentReport& report);

/// Writes report.json, summary.csv and scatter.csv into `dir`.
void emit_report(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace fairdisc
