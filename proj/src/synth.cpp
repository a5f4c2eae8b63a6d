#include "delfi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "delfi/rng.hpp"

namespace delfi::synth {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

// Bounding box of the deployment area, degrees.
constexpr double kLatMin = 28.454, kLatMax = 28.644;
constexpr double kLonMin = 77.074, kLonMax = 77.328;

double wrap_degrees(double d) {
  d = std::fmod(d, 360.0);
  if (d < 0.0) d += 360.0;
  return d >= 360.0 ? 0.0 : d;
}

double distance_km(const StationMeta& a, const StationMeta& b) {
  const double dlat = (b.latitude - a.latitude) * 111.0;
  const double dlon = (b.longitude - a.longitude) * 111.0 * std::cos(a.latitude * kDeg);
  return std::hypot(dlat, dlon);
}

}  // namespace

std::int64_t start_hour() { return parse_timestamp("2018-11-01T00"); }

Dataset generate(std::size_t n_stations, std::size_t n_hours, std::uint64_t seed, const Profile& profile) {
  if (n_stations < 3) throw DomainError("synth: need at least 3 stations");
  if (n_hours < 200) throw DomainError("synth: need at least 200 hours");
  if (!(profile.advection_memory >= 0.0 && profile.advection_memory < 1.0))
    throw DomainError("synth: advection_memory must be in [0, 1)");
  Rng rng(derive_seed(seed, 0x53594e54ULL));
  const std::size_t n = n_stations;

  Dataset data;
  data.stations.resize(n);
  data.records.assign(n, {});
  data.spike_group.resize(n);
  std::vector<double> base(n), pm1_ratio(n), pm10_ratio(n), temp_offset(n), speed_factor(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "S%02zu", i + 1);
    data.stations[i] = {id, rng.uniform(kLatMin, kLatMax), rng.uniform(kLonMin, kLonMax)};
    data.spike_group[i] = i % 3;
    base[i] = rng.uniform(50.0, 130.0);
    pm1_ratio[i] = rng.uniform(0.55, 0.7);
    pm10_ratio[i] = rng.uniform(1.6, 2.0);
    temp_offset[i] = rng.uniform(-1.5, 1.5);
    speed_factor[i] = rng.uniform(0.8, 1.2);
  }

  // Lag (hours) and receiving bearing for every ordered pair; bearing(i, j)
  // is the direction from receiver i toward source j.
  std::vector<int> lag(n * n, 1);
  std::vector<double> bearing(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = distance_km(data.stations[i], data.stations[j]);
      lag[i * n + j] = d < 8.0 ? 1 : (d < 16.0 ? 2 : 3);
      const auto& a = data.stations[i];
      const auto& b = data.stations[j];
      bearing[i * n + j] = (a.latitude == b.latitude && a.longitude == b.longitude)
                               ? 0.0
                               : initial_bearing(a.latitude, a.longitude, b.latitude, b.longitude);
    }

  // Regional wind: direction wanders around the prevailing origin with
  // occasional regime shifts, speed is a positive AR process with a daytime
  // maximum.
  std::vector<double> wind_from(n_hours), wind_speed(n_hours), temp_regional(n_hours);
  {
    double offset = 0.0, speed_ar = 0.0, temp_ar = 0.0;
    for (std::size_t t = 0; t < n_hours; ++t) {
      offset = 0.97 * offset + rng.normal() * 9.0;
      if (rng.uniform() < 0.01) offset = rng.uniform(-150.0, 150.0);
      wind_from[t] = wrap_degrees(profile.prevailing_wind_from + offset);
      speed_ar = 0.9 * speed_ar + rng.normal() * 0.35;
      const double hour = static_cast<double>(t % 24);
      wind_speed[t] = std::max(0.2, 2.5 + 1.0 * std::sin(2 * kPi * (hour - 9.0) / 24.0) + speed_ar);
      temp_ar = 0.98 * temp_ar + rng.normal() * 0.3;
      // Slow seasonal cooling into January, warming after.
      const double season = -6.0 * std::sin(kPi * static_cast<double>(t) / static_cast<double>(n_hours));
      temp_regional[t] = 22.0 + season + 7.0 * std::sin(2 * kPi * (hour - 9.0) / 24.0) + temp_ar;
    }
  }

  // Local (pre-advection) PM2.5 per station.
  std::vector<std::vector<double>> local(n, std::vector<double>(n_hours));
  std::vector<std::vector<double>> phi(n, std::vector<double>(n_hours));
  std::vector<std::vector<double>> speed(n, std::vector<double>(n_hours));
  for (std::size_t i = 0; i < n; ++i) {
    double ar = 0.0, spike = 0.0, drive = 0.0;
    const double rate = profile.spike_rates[data.spike_group[i]];
    for (std::size_t t = 0; t < n_hours; ++t) {
      const double hour = static_cast<double>(t % 24);
      ar = 0.95 * ar + rng.normal() * 8.0;
      // An episode feeds a decaying drive, so the multiplier builds over a
      // few hours, peaks near the drawn amplitude and then fades.
      drive *= profile.spike_drive_decay;
      if (rng.uniform() < rate) drive += rng.uniform(profile.spike_amplitude[0], profile.spike_amplitude[1]);
      spike = profile.spike_decay * spike + profile.spike_gain * drive;
      const double diurnal = 0.35 * base[i] * std::sin(2 * kPi * (hour - 14.0) / 24.0);
      local[i][t] = std::max(1.0, base[i] + diurnal + ar) * (1.0 + spike);
      phi[i][t] = wrap_degrees(wind_from[t] + rng.normal() * 5.0);
      speed[i][t] = std::max(0.0, wind_speed[t] * speed_factor[i] + rng.normal() * 0.2);
    }
  }

  const auto t0 = start_hour();
  const double memory = profile.advection_memory;
  for (std::size_t i = 0; i < n; ++i) {
    auto& recs = data.records[i];
    recs.reserve(n_hours);
    double received = 0.0;
    for (std::size_t t = 0; t < n_hours; ++t) {
      double pm = local[i][t];
      if (profile.advection > 0.0) {
        double inflow = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const auto L = static_cast<std::size_t>(lag[i * n + j]);
          if (t < L) continue;
          const double align = std::cos((bearing[i * n + j] - phi[j][t - L]) * kDeg);
          if (align <= 0.0) continue;
          inflow += align * (speed[j][t - L] / 2.5) * local[j][t - L];
        }
        received = memory * received + (1.0 - memory) * inflow / static_cast<double>(n - 1);
        pm += profile.advection * received;
      }
      StationRecord r;
      r.station_id = data.stations[i].station_id;
      r.timestamp = t0 + static_cast<std::int64_t>(t);
      r.pm25 = pm;
      r.pm1 = std::max(0.0, pm * pm1_ratio[i] * (1.0 + 0.05 * rng.normal()));
      r.pm10 = std::max(0.0, pm * pm10_ratio[i] * (1.0 + 0.08 * rng.normal()));
      r.temperature = temp_regional[t] + temp_offset[i] + 0.3 * rng.normal();
      r.humidity = std::clamp(65.0 - 1.8 * (r.temperature - 18.0) + 4.0 * rng.normal(), 5.0, 100.0);
      r.visibility = std::max(0.1, 9.0 - 0.025 * pm + 0.5 * rng.normal());
      r.wind_speed = speed[i][t];
      r.wind_bearing = phi[i][t];
      validate(r);
      recs.push_back(std::move(r));
    }
  }
  return data;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  std::vector<StationEntry> entries;
  for (std::size_t i = 0; i < data.stations.size(); ++i) {
    const auto file = data.stations[i].station_id + ".csv";
    write_station_csv(dir / file, data.records[i]);
    entries.push_back({data.stations[i], file});
  }
  write_station_meta(dir / "stations.csv", entries);
}

}  // namespace delfi::synth
