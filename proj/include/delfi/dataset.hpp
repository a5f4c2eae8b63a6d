#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "delfi/data_model.hpp"
#include "delfi/ingest.hpp"

namespace delfi {

struct DatasetOptions {
  /// Replace the standardized NEF column with zeros (ablation runs).
  bool ablate_nef = false;
};

/// Row range [first_row, last_row] of one station's series that an example
/// reads, window and target included. Used for leakage-free splitting.
struct RowSpan {
  std::size_t station = 0;
  std::size_t first_row = 0;
  std::size_t end_row = 0;  // last row of the input window (timestamp t)
  std::size_t last_row = 0;
};

struct PointExample {
  RowSpan span;
  FeatureWindow window;
  double last_pm25 = 0.0;  // raw PM2.5 at t
  double target = 0.0;     // raw residual PM(t+1) - PM(t)
};

struct HistogramExample {
  RowSpan span;
  FeatureWindow window;
  int horizon = 0;
  Histogram target{};
};

/// True when rows [end_row-5, end_row] are hourly-contiguous with NEF present.
bool window_is_valid(const StationSeries& series, std::size_t end_row);

/// Standardized window ending at `end_row`; caller checks validity first.
FeatureWindow make_window(const FeatureSet& fs, std::size_t station, std::size_t end_row,
                          const DatasetOptions& opts = {});

std::vector<PointExample> build_point_dataset(const FeatureSet& fs, const DatasetOptions& opts = {});

/// Histogram over the s hourly values at offsets [s/2, 3s/2) after t.
/// `horizon` must be even and >= 2.
std::vector<HistogramExample> build_histogram_dataset(const FeatureSet& fs, int horizon,
                                                      const DatasetOptions& opts = {});

/// Normalized bin counts of a run of PM2.5 values.
Histogram histogram_of(std::span<const double> pm25_values);

/// Train examples use only rows in the first `train_fraction` of their
/// station's rows; test examples only rows after it. Straddlers are dropped.
template <typename Example>
std::pair<std::vector<Example>, std::vector<Example>> split_train_test(
    const std::vector<Example>& examples, const FeatureSet& fs) {
  std::vector<std::size_t> boundary(fs.stations.size());
  for (std::size_t s = 0; s < fs.stations.size(); ++s)
    boundary[s] = train_row_count(fs.stations[s].rows.size(), fs.train_fraction);
  std::pair<std::vector<Example>, std::vector<Example>> out;
  for (const auto& ex : examples) {
    const auto b = boundary[ex.span.station];
    if (ex.span.last_row < b)
      out.first.push_back(ex);
    else if (ex.span.first_row >= b)
      out.second.push_back(ex);
  }
  return out;
}

struct StationGrouping {
  std::vector<std::size_t> component;  // per station, in {0,1,2}
  std::vector<double> residual_variance;
  std::vector<std::string> warnings;
};

/// Sorts stations by residual variance (ties by station_id) and cuts into
/// equal-count terciles, larger groups first (13 -> 5/4/4).
StationGrouping group_stations_by_residual_variance(std::span<const PointExample> train,
                                                    const FeatureSet& fs);

/// Population std of the raw residual targets; used to scale training targets.
double residual_scale(std::span<const PointExample> train);

}  // namespace delfi
