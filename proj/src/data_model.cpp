#include "delfi/data_model.hpp"

#include <cmath>
#include <limits>

namespace delfi {

void validate(const StationMeta& meta) {
  if (meta.station_id.empty()) throw DomainError("station_id must not be empty");
  if (!(meta.latitude >= -90.0 && meta.latitude <= 90.0))
    throw DomainError("latitude out of range for station " + meta.station_id);
  if (!(meta.longitude >= -180.0 && meta.longitude <= 180.0))
    throw DomainError("longitude out of range for station " + meta.station_id);
}

FeatureRow StationRecord::to_row() const {
  return {pm1,        pm10,       pm25,         temperature, humidity,
          visibility, wind_speed, wind_bearing, std::numeric_limits<double>::quiet_NaN()};
}

void validate(const StationRecord& r) {
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!finite_nonneg(r.pm1) || !finite_nonneg(r.pm10) || !finite_nonneg(r.pm25))
    throw DomainError("particulate concentrations must be finite and >= 0");
  if (!std::isfinite(r.temperature)) throw DomainError("temperature must be finite");
  if (!(r.humidity >= 0.0 && r.humidity <= 100.0))
    throw DomainError("humidity must be in [0,100]");
  if (!finite_nonneg(r.visibility)) throw DomainError("visibility must be >= 0");
  if (!finite_nonneg(r.wind_speed)) throw DomainError("wind_speed must be >= 0");
  if (!(r.wind_bearing >= 0.0 && r.wind_bearing < 360.0))
    throw DomainError("wind_bearing must be in [0,360)");
}

std::size_t bin_index(double pm25) {
  if (!std::isfinite(pm25) || pm25 < 0.0)
    throw DomainError("bin_index: PM2.5 must be finite and non-negative");
  std::size_t k = 0;
  while (k + 1 < kBinCount && pm25 >= BinScheme::lower_edges[k + 1]) ++k;
  return k;
}

bool is_valid_histogram(const Histogram& h, double tol) {
  double sum = 0.0;
  for (double p : h) {
    if (!(p >= 0.0 && p <= 1.0)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

Horizon Horizon::make(int hours, ForecastMode mode) {
  if (hours < 1) throw DomainError("horizon must be >= 1 hour");
  if (mode == ForecastMode::Probabilistic && hours % 2 != 0)
    throw DomainError("probabilistic horizon must be even, got " + std::to_string(hours));
  return Horizon{hours, mode};
}

std::string_view to_string(ForecastMode mode) {
  return mode == ForecastMode::Point ? "point" : "probabilistic";
}

}  // namespace delfi
