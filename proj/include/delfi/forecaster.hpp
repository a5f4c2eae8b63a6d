#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "delfi/data_model.hpp"
#include "delfi/ingest.hpp"
#include "delfi/mixture.hpp"

namespace delfi {

inline constexpr int kMaxPointHorizon = 24;

/// Maps standardized windows to next-hour residuals in ug/m3.
using ResidualPredictor = std::function<std::vector<double>(std::span<const Window>)>;

struct ForecastOrigin {
  Window window;           // standardized, ends at t
  double last_pm25 = 0.0;  // observed PM2.5 at t, ug/m3
};

/// Drops the oldest hour and appends a copy of the newest row whose PM2.5
/// column is replaced by `pm25_z`. All other features persist.
Window slide_window(const Window& w, double pm25_z);

/// Iterated next-hour prediction. Returns predictions[origin][step - 1] for
/// step = 1..steps, in ug/m3, each step clamped at 0 before it is fed back.
std::vector<std::vector<double>> rollout(std::span<const ForecastOrigin> origins, int steps,
                                         const ResidualPredictor& predictor,
                                         const Standardizer& standardizer);

ResidualPredictor delfi_predictor(const TrainedModel& m);

/// PM2.5 forecast s hours after the window end, 1 <= s <= 24.
double predict_point(const TrainedModel& m, const ForecastOrigin& origin, int s);

/// Histogram forecast centred at t+s from the long-term model trained for s.
Histogram predict_histogram(const TrainedModel& m, const Window& w, int s);

struct PointPrediction {
  std::string station_id;
  std::int64_t t = 0;
  int horizon = 0;
  double value = 0.0;
};

struct HistogramPrediction {
  std::string station_id;
  std::int64_t t = 0;
  int horizon = 0;
  Histogram value{};
};

/// `station_id,t,horizon,mode,prediction` (point) or with six probability
/// columns p_good..p_severe (probabilistic).
void write_predictions_csv(const std::filesystem::path& path, std::span<const PointPrediction> rows);
void write_predictions_csv(const std::filesystem::path& path, std::span<const HistogramPrediction> rows);

}  // namespace delfi
