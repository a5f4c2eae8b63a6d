#pragma once

// End-to-end orchestration shared by the CLI and the acceptance suite.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "delfi/dataset.hpp"
#include "delfi/evaluation.hpp"
#include "delfi/ingest.hpp"
#include "delfi/mixture.hpp"
#include "delfi/trainer.hpp"

namespace delfi {

struct ModelSettings {
  std::size_t layers = 2;
  std::size_t hidden = 32;
};

/// Loads `stations.csv` and every station file it lists, then featurizes.
/// Dropped rows are appended to `drop_report` as "station:line: reason".
FeatureSet featurize_files(const std::filesystem::path& stations_csv, double train_fraction,
                           std::vector<std::string>* drop_report = nullptr);

/// Builds the variant's dataset, pre-trains components on their residual-
/// variance station groups, then runs alternating optimization. `horizon`
/// is ignored for the short variant.
TrainedModel train_model(const FeatureSet& fs, Variant variant, int horizon, const ModelSettings& settings,
                         const TrainConfig& cfg, const DatasetOptions& opts, TrainLog& log);

struct ExperimentConfig {
  ModelSettings model;
  TrainConfig train;
  BenchmarkConfig bench;
};

struct ExperimentResult {
  TrainedModel short_model;
  std::map<int, TrainedModel> long_models;
  std::map<std::string, TrainLog> logs;  // "short", "long_s<horizon>"
  ForecastReport report;
};

/// Trains the short model and one long model per probabilistic horizon, then
/// runs the benchmark grid.
ExperimentResult run_experiment(const FeatureSet& fs, const ExperimentConfig& cfg);

std::string model_filename(Variant v, int horizon);

}  // namespace delfi
