#include "delfi/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "delfi/baselines.hpp"
#include "delfi/forecaster.hpp"

namespace delfi {

double mae(std::span<const double> predictions, std::span<const double> actuals) {
  if (predictions.empty() || predictions.size() != actuals.size())
    throw DomainError("mae: need equal-length non-empty inputs");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) sum += std::abs(predictions[i] - actuals[i]);
  return sum / static_cast<double>(predictions.size());
}

double mean_kl(std::span<const Histogram> predicted, std::span<const Histogram> actual) {
  if (predicted.empty() || predicted.size() != actual.size())
    throw DomainError("mean_kl: need equal-length non-empty inputs");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) sum += nn::kl_divergence(actual[i], predicted[i]);
  return sum / static_cast<double>(predicted.size());
}

void require_test_split(const RowSpan& span, const FeatureSet& fs) {
  const auto& s = fs.stations.at(span.station);
  if (span.first_row < train_row_count(s.rows.size(), fs.train_fraction))
    throw std::logic_error("metric computed on a training example (station " + s.meta.station_id + ")");
}

const ReportCell* ForecastReport::find(std::string_view method, int horizon, ForecastMode mode) const {
  for (const auto& c : cells)
    if (c.method == method && c.horizon == horizon && c.mode == mode) return &c;
  return nullptr;
}

std::string ForecastReport::csv() const {
  std::ostringstream out;
  out << "method,horizon,mode,metric,value,n_examples,k,seed\n";
  char buf[64];
  for (const auto& c : cells) {
    if (c.value)
      std::snprintf(buf, sizeof buf, "%.17g", *c.value);
    else
      std::snprintf(buf, sizeof buf, "NA");
    out << c.method << ',' << c.horizon << ',' << to_string(c.mode) << ',' << c.metric() << ',' << buf
        << ',' << c.n_examples << ',' << c.k << ',' << c.seed << '\n';
  }
  return out.str();
}

void ForecastReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << csv();
}

std::string ForecastReport::table() const {
  std::ostringstream out;
  auto grid = [&](ForecastMode mode, const char* title) {
    std::vector<std::string> methods;
    std::vector<int> horizons;
    for (const auto& c : cells) {
      if (c.mode != mode) continue;
      if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
      if (std::find(horizons.begin(), horizons.end(), c.horizon) == horizons.end()) horizons.push_back(c.horizon);
    }
    if (methods.empty()) return;
    out << title << '\n';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-8s", "method");
    out << buf;
    for (int h : horizons) {
      std::snprintf(buf, sizeof buf, " %10s",
                    (std::to_string(h) + (mode == ForecastMode::Point ? "h" : "h+-" + std::to_string(h / 2))).c_str());
      out << buf;
    }
    out << '\n';
    for (const auto& m : methods) {
      std::snprintf(buf, sizeof buf, "%-8s", m.c_str());
      out << buf;
      for (int h : horizons) {
        const auto* c = find(m, h, mode);
        if (c && c->value)
          std::snprintf(buf, sizeof buf, " %10.2f", *c->value);
        else
          std::snprintf(buf, sizeof buf, " %10s", "NA");
        out << buf;
      }
      out << '\n';
    }
  };
  grid(ForecastMode::Point, "Point forecasts: MAE (ug/m3)");
  grid(ForecastMode::Probabilistic, "Probabilistic forecasts: mean KL(actual || predicted)");
  return out.str();
}

namespace {

std::vector<Window> windows_for(const TrainedModel& m, std::vector<Window> ws) {
  if (m.ablate_nef)
    for (auto& w : ws)
      for (std::size_t t = 0; t < kWindowLength; ++t) w[t * kFeatureCount + idx(Feature::Nef)] = 0.0;
  return ws;
}

template <typename Example>
std::vector<Example> strided(std::vector<Example> v, std::size_t stride) {
  if (stride <= 1) return v;
  std::vector<Example> out;
  for (std::size_t i = 0; i < v.size(); i += stride) out.push_back(std::move(v[i]));
  return out;
}

/// Observed PM2.5 `hours` after row `end_row`, if present.
std::optional<double> observed_after(const StationSeries& s, std::size_t end_row, int hours) {
  const auto target = s.timestamps[end_row] + hours;
  auto it = std::lower_bound(s.timestamps.begin() + static_cast<std::ptrdiff_t>(end_row), s.timestamps.end(), target);
  if (it == s.timestamps.end() || *it != target) return std::nullopt;
  return s.rows[static_cast<std::size_t>(it - s.timestamps.begin())][idx(Feature::Pm25)];
}

}  // namespace

double evaluate_histogram_model(const FeatureSet& fs, const TrainedModel& model, std::size_t eval_stride,
                                std::size_t* n_examples) {
  const int s = model.model.config().horizon;
  auto [train, test] = split_train_test(build_histogram_dataset(fs, s), fs);
  test = strided(std::move(test), eval_stride);
  if (test.empty()) throw DomainError("no test examples for horizon " + std::to_string(s));
  std::vector<Window> ws;
  std::vector<Histogram> actual;
  for (const auto& ex : test) {
    require_test_split(ex.span, fs);
    ws.push_back(ex.window.values);
    actual.push_back(ex.target);
  }
  const auto pred = model.model.forward_long(windows_for(model, std::move(ws)));
  if (n_examples) *n_examples = test.size();
  return mean_kl(pred, actual);
}

ForecastReport run_benchmark(const FeatureSet& fs, const BenchmarkModels& models, const BenchmarkConfig& cfg) {
  ForecastReport report;

  // Point forecasts.
  if (!cfg.point_horizons.empty()) {
    for (int h : cfg.point_horizons)
      if (h < 1 || h > kMaxPointHorizon) throw UsageError("point horizon out of range: " + std::to_string(h));
    const int max_h = *std::max_element(cfg.point_horizons.begin(), cfg.point_horizons.end());
    auto [train, test] = split_train_test(build_point_dataset(fs), fs);
    test = strided(std::move(test), cfg.eval_stride);

    std::vector<Window> train_windows;
    std::vector<double> train_targets;
    for (const auto& ex : train) {
      train_windows.push_back(ex.window.values);
      train_targets.push_back(ex.target);
    }
    std::vector<ForecastOrigin> origins;
    for (const auto& ex : test) {
      require_test_split(ex.span, fs);
      origins.push_back({ex.window.values, ex.last_pm25});
    }

    for (const auto& method : cfg.point_methods) {
      ResidualPredictor predictor;
      std::size_t k = 0;
      std::optional<KnnPointModel> knn;
      std::optional<LinearModel> linear;
      if (method == "knn" && !train.empty()) {
        knn.emplace(train_windows, train_targets, cfg.knn_k);
        k = knn->k();
        predictor = [&](std::span<const Window> ws) { return knn->predict(ws); };
      } else if (method == "linear" && !train.empty()) {
        linear = linear_fit(train_windows, train_targets);
        predictor = [&](std::span<const Window> ws) { return linear->predict(ws); };
      } else if (method == "delfi" && models.short_model) {
        const TrainedModel& m = *models.short_model;
        auto base = delfi_predictor(m);
        predictor = [&m, base](std::span<const Window> ws) {
          if (!m.ablate_nef) return base(ws);
          auto masked = windows_for(m, {ws.begin(), ws.end()});
          return base(masked);
        };
      }
      std::vector<std::vector<double>> paths;
      if (predictor && !origins.empty()) paths = rollout(origins, max_h, predictor, fs.standardizer);

      for (int h : cfg.point_horizons) {
        ReportCell cell{method, h, ForecastMode::Point, std::nullopt, 0, k, cfg.seed};
        if (!paths.empty()) {
          std::vector<double> pred, actual;
          for (std::size_t i = 0; i < test.size(); ++i) {
            auto obs = observed_after(fs.stations[test[i].span.station], test[i].span.end_row, h);
            if (!obs) continue;
            pred.push_back(paths[i][static_cast<std::size_t>(h - 1)]);
            actual.push_back(*obs);
          }
          if (!pred.empty()) {
            cell.value = mae(pred, actual);
            cell.n_examples = pred.size();
          }
        }
        report.cells.push_back(cell);
      }
    }
  }

  // Probabilistic forecasts.
  for (int s : cfg.probabilistic_horizons) {
    auto [train, test] = split_train_test(build_histogram_dataset(fs, s), fs);
    test = strided(std::move(test), cfg.eval_stride);
    std::vector<Window> test_windows;
    std::vector<Histogram> actual;
    for (const auto& ex : test) {
      require_test_split(ex.span, fs);
      test_windows.push_back(ex.window.values);
      actual.push_back(ex.target);
    }
    for (const auto& method : cfg.probabilistic_methods) {
      ReportCell cell{method, s, ForecastMode::Probabilistic, std::nullopt, 0, 0, cfg.seed};
      std::vector<Histogram> pred;
      if (!test.empty()) {
        if (method == "knn" && !train.empty()) {
          std::vector<Window> tw;
          std::vector<Histogram> th;
          for (const auto& ex : train) {
            tw.push_back(ex.window.values);
            th.push_back(ex.target);
          }
          KnnHistogramModel knn(tw, th, cfg.knn_k);
          cell.k = knn.k();
          pred = knn.predict(test_windows);
        } else if (method == "delfi") {
          auto it = models.long_models.find(s);
          if (it != models.long_models.end() && it->second)
            pred = it->second->model.forward_long(windows_for(*it->second, test_windows));
        }
      }
      if (!pred.empty()) {
        cell.value = mean_kl(pred, actual);
        cell.n_examples = pred.size();
      }
      report.cells.push_back(cell);
    }
  }
  return report;
}

}  // namespace delfi
