#include "delfi/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace delfi {

Window slide_window(const Window& w, double pm25_z) {
  Window out;
  std::copy(w.begin() + kFeatureCount, w.end(), out.begin());
  const std::size_t last = (kWindowLength - 1) * kFeatureCount;
  std::copy_n(w.begin() + last, kFeatureCount, out.begin() + last);
  out[last + idx(Feature::Pm25)] = pm25_z;
  return out;
}

std::vector<std::vector<double>> rollout(std::span<const ForecastOrigin> origins, int steps,
                                         const ResidualPredictor& predictor,
                                         const Standardizer& standardizer) {
  if (steps < 1) throw DomainError("rollout: steps must be >= 1");
  std::vector<Window> windows;
  std::vector<double> level;
  windows.reserve(origins.size());
  for (const auto& o : origins) {
    windows.push_back(o.window);
    level.push_back(o.last_pm25);
  }
  std::vector<std::vector<double>> out(origins.size(), std::vector<double>(static_cast<std::size_t>(steps)));
  for (int step = 0; step < steps; ++step) {
    const auto residual = predictor(windows);
    if (residual.size() != windows.size()) throw DomainError("rollout: predictor returned wrong count");
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const double next = level[i] + residual[i];
      if (!std::isfinite(next))
        throw NumericError("non-finite prediction at step " + std::to_string(step + 1));
      level[i] = std::max(0.0, next);
      out[i][static_cast<std::size_t>(step)] = level[i];
      windows[i] = slide_window(windows[i], standardizer.transform(Feature::Pm25, level[i]));
    }
  }
  return out;
}

ResidualPredictor delfi_predictor(const TrainedModel& m) {
  if (m.model.config().variant != Variant::Short)
    throw UsageError("point prediction needs a short-term model");
  return [&m](std::span<const Window> windows) {
    auto r = m.model.forward_short(windows);
    for (double& v : r) v *= m.residual_scale;
    return r;
  };
}

double predict_point(const TrainedModel& m, const ForecastOrigin& origin, int s) {
  if (s < 1 || s > kMaxPointHorizon)
    throw DomainError("point horizon must be in [1, 24], got " + std::to_string(s));
  return rollout(std::span(&origin, 1), s, delfi_predictor(m), m.standardizer)
      .front()[static_cast<std::size_t>(s - 1)];
}

Histogram predict_histogram(const TrainedModel& m, const Window& w, int s) {
  const auto& cfg = m.model.config();
  if (cfg.variant != Variant::Long) throw UsageError("histogram prediction needs a long-term model");
  if (cfg.horizon != s)
    throw UsageError("model was trained for horizon " + std::to_string(cfg.horizon) + ", requested " +
                     std::to_string(s));
  return m.model.forward_long(w);
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_predictions_csv(const std::filesystem::path& path, std::span<const PointPrediction> rows) {
  auto out = open_csv(path);
  out << "station_id,t,horizon,mode,prediction\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    out << r.station_id << ',' << r.t << ',' << r.horizon << ",point," << buf << '\n';
  }
}

void write_predictions_csv(const std::filesystem::path& path, std::span<const HistogramPrediction> rows) {
  auto out = open_csv(path);
  out << "station_id,t,horizon,mode,p_good,p_satisfactory,p_moderate,p_poor,p_very_poor,p_severe\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.station_id << ',' << r.t << ',' << r.horizon << ",probabilistic";
    for (double p : r.value) {
      std::snprintf(buf, sizeof buf, ",%.17g", p);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace delfi
