#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "delfi/data_model.hpp"
#include "delfi/dataset.hpp"
#include "delfi/ingest.hpp"
#include "delfi/mixture.hpp"

namespace delfi {

/// Mean absolute error; throws DomainError on empty or mismatched input.
double mae(std::span<const double> predictions, std::span<const double> actuals);

/// Mean smoothed KL(actual || predicted) over paired histograms.
double mean_kl(std::span<const Histogram> predicted, std::span<const Histogram> actual);

/// Throws std::logic_error if the example touches any training row.
void require_test_split(const RowSpan& span, const FeatureSet& fs);

inline const std::vector<int> kPointHorizons = {1, 2, 3, 4, 5, 6, 8, 12, 24};
inline const std::vector<int> kProbabilisticHorizons = {6, 8, 12, 24, 48};

struct ReportCell {
  std::string method;
  int horizon = 0;
  ForecastMode mode = ForecastMode::Point;
  std::optional<double> value;  // empty = absent (no model for the cell)
  std::size_t n_examples = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;

  std::string metric() const { return mode == ForecastMode::Point ? "mae" : "kl"; }
};

struct ForecastReport {
  std::vector<ReportCell> cells;

  const ReportCell* find(std::string_view method, int horizon, ForecastMode mode) const;
  /// `method,horizon,mode,metric,value,n_examples,k,seed`; absent cells
  /// carry value NA.
  void write_csv(const std::filesystem::path& path) const;
  std::string csv() const;
  /// Two aligned grids: methods x point horizons, methods x probabilistic horizons.
  std::string table() const;
};

struct BenchmarkConfig {
  std::vector<int> point_horizons = kPointHorizons;
  std::vector<int> probabilistic_horizons = kProbabilisticHorizons;
  std::vector<std::string> point_methods = {"knn", "linear", "delfi"};
  std::vector<std::string> probabilistic_methods = {"knn", "delfi"};
  std::size_t knn_k = 5;
  std::size_t eval_stride = 1;  // keep every n-th test origin
  std::uint64_t seed = 1;
};

struct BenchmarkModels {
  const TrainedModel* short_model = nullptr;
  std::map<int, const TrainedModel*> long_models;  // by horizon
};

/// Point MAE grid and probabilistic KL grid on the test split. Iterated
/// point forecasts start from the observed window at every test origin.
/// Cells without a model are reported absent; the run continues.
ForecastReport run_benchmark(const FeatureSet& fs, const BenchmarkModels& models, const BenchmarkConfig& cfg);

/// Test-split KL of one long-term model (used for ablations).
double evaluate_histogram_model(const FeatureSet& fs, const TrainedModel& model, std::size_t eval_stride,
                                std::size_t* n_examples = nullptr);

}  // namespace delfi
