#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "delfi/data_model.hpp"
#include "delfi/ingest.hpp"

namespace delfi::synth {

struct Profile {
  /// Hourly spike-onset probability for the three station groups; station i
  /// belongs to group i % 3.
  std::array<double, 3> spike_rates = {0.001, 0.01, 0.05};
  /// Spike episodes: amplitude range of the drive added at onset, hourly
  /// decay of that drive, and decay/gain of the multiplier it feeds.
  std::array<double, 2> spike_amplitude = {1.0, 2.5};
  double spike_drive_decay = 0.75;
  double spike_decay = 0.85;
  double spike_gain = 0.43;
  /// Share of upwind stations' local PM2.5 carried downwind (0 disables).
  double advection = 1.0;
  /// Hourly retention of PM received from upwind, in [0, 1).
  double advection_memory = 0.9;
  /// Prevailing wind origin in degrees (north-westerly by default).
  double prevailing_wind_from = 300.0;
};

struct Dataset {
  std::vector<StationMeta> stations;
  std::vector<std::vector<StationRecord>> records;
  std::vector<std::size_t> spike_group;  // per station
};

inline constexpr std::size_t kDefaultStations = 13;
inline constexpr std::size_t kDefaultHours = 3552;  // 1 Nov to 28 Mar, hourly

/// First timestamp of generated series: 2018-11-01T00:00Z as an epoch-hour.
std::int64_t start_hour();

/// Seeded multi-station series: diurnal PM2.5 around a per-station baseline
/// with additive AR(1) noise, multiplicative pollution episodes and wind
/// advection of upwind stations' PM with a 1-3 hour lag. Advected PM lingers
/// at the receiving station. Requires n_stations >= 3 and
/// n_hours >= 200.
Dataset generate(std::size_t n_stations, std::size_t n_hours, std::uint64_t seed, const Profile& profile = {});

/// Writes `stations.csv` plus one `<station_id>.csv` per station into `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);

}  // namespace delfi::synth
