#include "delfi/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace delfi {

bool window_is_valid(const StationSeries& series, std::size_t end_row) {
  if (end_row + 1 < kWindowLength || end_row >= series.rows.size()) return false;
  const std::size_t first = end_row + 1 - kWindowLength;
  if (series.timestamps[end_row] - series.timestamps[first] !=
      static_cast<std::int64_t>(kWindowLength - 1))
    return false;
  for (std::size_t r = first; r <= end_row; ++r)
    if (std::isnan(series.rows[r][idx(Feature::Nef)])) return false;
  return true;
}

FeatureWindow make_window(const FeatureSet& fs, std::size_t station, std::size_t end_row,
                          const DatasetOptions& opts) {
  const auto& series = fs.stations[station];
  FeatureWindow w;
  w.station = station;
  w.end_timestamp = series.timestamps[end_row];
  const std::size_t first = end_row + 1 - kWindowLength;
  for (std::size_t step = 0; step < kWindowLength; ++step) {
    auto z = fs.standardizer.transform(series.rows[first + step]);
    if (opts.ablate_nef) z[idx(Feature::Nef)] = 0.0;
    std::copy(z.begin(), z.end(), w.values.begin() + static_cast<std::ptrdiff_t>(step * kFeatureCount));
  }
  return w;
}

std::vector<PointExample> build_point_dataset(const FeatureSet& fs, const DatasetOptions& opts) {
  std::vector<PointExample> out;
  for (std::size_t s = 0; s < fs.stations.size(); ++s) {
    const auto& series = fs.stations[s];
    for (std::size_t e = kWindowLength - 1; e + 1 < series.rows.size(); ++e) {
      if (series.timestamps[e + 1] != series.timestamps[e] + 1) continue;
      if (!window_is_valid(series, e)) continue;
      PointExample ex;
      ex.span = {s, e + 1 - kWindowLength, e, e + 1};
      ex.window = make_window(fs, s, e, opts);
      ex.last_pm25 = series.rows[e][idx(Feature::Pm25)];
      ex.target = series.rows[e + 1][idx(Feature::Pm25)] - ex.last_pm25;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

Histogram histogram_of(std::span<const double> pm25_values) {
  if (pm25_values.empty()) throw DomainError("histogram_of: no values");
  std::array<std::size_t, kBinCount> counts{};
  for (double v : pm25_values) ++counts[bin_index(v)];
  Histogram h;
  const auto n = static_cast<double>(pm25_values.size());
  for (std::size_t k = 0; k < kBinCount; ++k) h[k] = static_cast<double>(counts[k]) / n;
  return h;
}

std::vector<HistogramExample> build_histogram_dataset(const FeatureSet& fs, int horizon,
                                                      const DatasetOptions& opts) {
  const auto h = Horizon::make(horizon, ForecastMode::Probabilistic);
  if (h.hours < 2) throw DomainError("probabilistic horizon must be >= 2");
  const auto half = static_cast<std::int64_t>(h.hours / 2);
  const auto len = static_cast<std::size_t>(h.hours);
  std::vector<HistogramExample> out;
  std::vector<double> future(len);
  for (std::size_t s = 0; s < fs.stations.size(); ++s) {
    const auto& series = fs.stations[s];
    const auto& ts = series.timestamps;
    for (std::size_t e = kWindowLength - 1; e < series.rows.size(); ++e) {
      if (!window_is_valid(series, e)) continue;
      auto it = std::lower_bound(ts.begin() + static_cast<std::ptrdiff_t>(e), ts.end(), ts[e] + half);
      if (it == ts.end() || *it != ts[e] + half) continue;
      const auto r0 = static_cast<std::size_t>(it - ts.begin());
      const auto r1 = r0 + len - 1;
      if (r1 >= ts.size() || ts[r1] - ts[r0] != static_cast<std::int64_t>(len - 1)) continue;
      for (std::size_t j = 0; j < len; ++j) future[j] = series.rows[r0 + j][idx(Feature::Pm25)];
      HistogramExample ex;
      ex.span = {s, e + 1 - kWindowLength, e, r1};
      ex.window = make_window(fs, s, e, opts);
      ex.horizon = h.hours;
      ex.target = histogram_of(future);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

StationGrouping group_stations_by_residual_variance(std::span<const PointExample> train,
                                                    const FeatureSet& fs) {
  const std::size_t n = fs.stations.size();
  StationGrouping g;
  g.component.assign(n, 0);
  g.residual_variance.assign(n, 0.0);

  std::vector<double> sum(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (const auto& ex : train) {
    sum[ex.span.station] += ex.target;
    ++count[ex.span.station];
  }
  std::vector<double> ss(n, 0.0);
  for (const auto& ex : train) {
    const double m = sum[ex.span.station] / static_cast<double>(count[ex.span.station]);
    ss[ex.span.station] += (ex.target - m) * (ex.target - m);
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (count[s] == 0) {
      g.warnings.push_back("station " + fs.stations[s].meta.station_id +
                           " has no training examples; treated as zero residual variance");
      continue;
    }
    g.residual_variance[s] = ss[s] / static_cast<double>(count[s]);
  }

  if (n < kComponentCount) {
    g.warnings.push_back("fewer than 3 stations: every station mapped to component 0");
    return g;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (g.residual_variance[a] != g.residual_variance[b])
      return g.residual_variance[a] < g.residual_variance[b];
    return fs.stations[a].meta.station_id < fs.stations[b].meta.station_id;
  });
  std::array<std::size_t, kComponentCount> sizes{};
  for (std::size_t k = 0; k < kComponentCount; ++k)
    sizes[k] = n / kComponentCount + (k < n % kComponentCount ? 1 : 0);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < kComponentCount; ++k)
    for (std::size_t j = 0; j < sizes[k]; ++j) g.component[order[pos++]] = k;
  return g;
}

double residual_scale(std::span<const PointExample> train) {
  if (train.empty()) throw DomainError("residual_scale: empty training set");
  double mean = 0.0;
  for (const auto& ex : train) mean += ex.target;
  mean /= static_cast<double>(train.size());
  double ss = 0.0;
  for (const auto& ex : train) ss += (ex.target - mean) * (ex.target - mean);
  const double sd = std::sqrt(ss / static_cast<double>(train.size()));
  if (!(sd > 0.0)) return 1.0;
  return sd;
}

}  // namespace delfi
