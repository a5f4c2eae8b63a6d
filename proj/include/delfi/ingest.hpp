#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "delfi/data_model.hpp"

namespace delfi {

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Parses an integer epoch-hour ("429528") or an ISO-8601 hour
/// ("2019-01-01T05", "2019-01-01T05:00:00Z", "2019-01-01 05:00").
/// Throws IngestError when the text is not an exact hour.
std::int64_t parse_timestamp(std::string_view text);

/// ISO-8601 rendering ("YYYY-MM-DDTHH:00:00Z") of an epoch-hour.
std::string format_timestamp(std::int64_t epoch_hour);

struct DroppedRow {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string reason;
};

struct StationLoad {
  std::vector<StationRecord> records;  // sorted by timestamp
  std::vector<DroppedRow> dropped;
};

/// Reads `timestamp,pm1,pm10,pm25,temperature,humidity,visibility,wind_speed,
/// wind_bearing` rows. Rows with blank/unparseable/out-of-range fields are
/// dropped and reported. Throws IngestError on a missing file, a header that
/// lacks a required column, or a duplicate timestamp.
StationLoad load_station_csv(const std::filesystem::path& path, const std::string& station_id);
StationLoad parse_station_csv(std::istream& in, const std::string& station_id,
                              const std::string& source_name = "<stream>");

void write_station_csv(const std::filesystem::path& path, std::span<const StationRecord> records);

struct StationEntry {
  StationMeta meta;
  std::filesystem::path path;  // resolved against the metadata file's directory
};

/// Reads `station_id,latitude,longitude,path`.
std::vector<StationEntry> load_station_meta(const std::filesystem::path& path);
void write_station_meta(const std::filesystem::path& path, std::span<const StationEntry> entries);

// ---------------------------------------------------------------------------
// Geometry and NEF
// ---------------------------------------------------------------------------

/// Great-circle initial bearing (forward azimuth) in degrees [0, 360) on a
/// spherical earth. Throws DomainError for identical points.
double initial_bearing(double from_lat, double from_lon, double to_lat, double to_lon);

/// bearing(a, i): initial bearing from station a to station i. The diagonal is
/// never read.
class BearingMatrix {
 public:
  BearingMatrix() = default;
  explicit BearingMatrix(std::span<const StationMeta> stations);

  std::size_t size() const { return n_; }
  double bearing(std::size_t from, std::size_t to) const;

 private:
  std::size_t n_ = 0;
  std::vector<double> deg_;
};

/// Observation of one station at a timestamp as it enters the NEF sum.
/// `pm25` and `wind_speed` are z-scores; `wind_bearing` is in degrees.
struct FlowObservation {
  std::size_t station = 0;
  double pm25 = 0.0;
  double wind_speed = 0.0;
  double wind_bearing = 0.0;
};

double sigmoid(double x);

/// Net external flow at `target`: sigmoid(sum over i != target of
/// pm_i * v_i * cos(bearing(target, i) - phi_i)). Observations of `target`
/// itself are ignored.
double compute_nef(std::span<const FlowObservation> at_t, std::size_t target,
                   const BearingMatrix& bearings);

// ---------------------------------------------------------------------------
// Standardization and featurized series
// ---------------------------------------------------------------------------

/// Number of leading rows that form the training split of an n-row series.
std::size_t train_row_count(std::size_t n, double train_fraction);

struct StationSeries {
  StationMeta meta;
  std::vector<std::int64_t> timestamps;
  std::vector<FeatureRow> rows;  // raw units; NEF is NaN when missing
};

class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(const std::array<double, kFeatureCount>& mean,
               const std::array<double, kFeatureCount>& stddev);

  /// Fits every feature on the training rows of each station, pooled. Throws
  /// DomainError for a constant (or empty) feature.
  static Standardizer fit(std::span<const StationSeries> stations, double train_fraction);

  bool fitted() const { return fitted_; }
  const std::array<double, kFeatureCount>& mean() const { return mean_; }
  const std::array<double, kFeatureCount>& stddev() const { return std_; }

  double transform(Feature f, double raw) const;
  double inverse(Feature f, double z) const;
  FeatureRow transform(const FeatureRow& raw) const;
  FeatureRow inverse(const FeatureRow& z) const;

 private:
  void require_fitted() const;

  bool fitted_ = false;
  std::array<double, kFeatureCount> mean_{};
  std::array<double, kFeatureCount> std_{};
};

/// Mean and population std of one feature over the training rows (NaN skipped).
std::pair<double, double> pooled_train_stats(std::span<const StationSeries> stations, Feature f,
                                             double train_fraction);

struct FeatureSet {
  std::vector<StationSeries> stations;
  Standardizer standardizer;
  double train_fraction = 0.85;
};

/// Builds per-station raw series, computes NEF from train-split z-scores of
/// PM2.5 and wind speed, then fits the 9-feature standardizer.
/// NEF is missing (NaN) at any timestamp where another station has no row.
FeatureSet featurize(std::span<const StationMeta> metas,
                     std::span<const std::vector<StationRecord>> records, double train_fraction);

void save_feature_set(const std::filesystem::path& path, const FeatureSet& fs);
FeatureSet load_feature_set(const std::filesystem::path& path);

}  // namespace delfi
