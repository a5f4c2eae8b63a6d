#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace delfi {

// Error kinds. Everything derives from std::runtime_error so callers can
// catch broadly at the CLI boundary.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IngestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kRawFeatureCount = 8;
inline constexpr std::size_t kFeatureCount = 9;
inline constexpr std::size_t kWindowLength = 6;
inline constexpr std::size_t kWindowSize = kWindowLength * kFeatureCount;
inline constexpr std::size_t kBinCount = 6;
inline constexpr std::size_t kComponentCount = 3;

/// Column order of a feature row. Flattened windows are time-major:
/// index = step * kFeatureCount + feature.
enum class Feature : std::size_t {
  Pm1 = 0,
  Pm10,
  Pm25,
  Temperature,
  Humidity,
  Visibility,
  WindSpeed,
  WindBearing,
  Nef,
};

constexpr std::size_t idx(Feature f) { return static_cast<std::size_t>(f); }

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "pm1",        "pm10",       "pm25",         "temperature", "humidity",
    "visibility", "wind_speed", "wind_bearing", "nef"};

using FeatureRow = std::array<double, kFeatureCount>;
using Window = std::array<double, kWindowSize>;
using Histogram = std::array<double, kBinCount>;

struct StationMeta {
  std::string station_id;
  double latitude = 0.0;   // degrees, [-90, 90]
  double longitude = 0.0;  // degrees, [-180, 180]
};

void validate(const StationMeta& meta);

/// One hourly observation. Timestamps are integer hours since the Unix epoch.
struct StationRecord {
  std::string station_id;
  std::int64_t timestamp = 0;
  double pm1 = 0.0;
  double pm10 = 0.0;
  double pm25 = 0.0;
  double temperature = 0.0;
  double humidity = 0.0;
  double visibility = 0.0;
  double wind_speed = 0.0;
  double wind_bearing = 0.0;

  /// Raw feature row with NEF left as NaN.
  FeatureRow to_row() const;
};

void validate(const StationRecord& rec);

/// A standardized 6-hour x 9-feature input ending at `end_timestamp`.
struct FeatureWindow {
  std::size_t station = 0;
  std::int64_t end_timestamp = 0;
  Window values{};

  double at(std::size_t step, Feature f) const {
    return values[step * kFeatureCount + idx(f)];
  }
};

/// Regulatory PM2.5 categories; left-closed, right-open, last bin unbounded.
struct BinScheme {
  static constexpr std::array<double, kBinCount> lower_edges = {0.0,  30.0,  60.0,
                                                                90.0, 120.0, 250.0};
  static constexpr std::array<std::string_view, kBinCount> labels = {
      "Good", "Satisfactory", "Moderately polluted", "Poor", "Very poor", "Severe"};
};

/// Bin of a PM2.5 concentration in ug/m3. Throws DomainError for negative or
/// non-finite input.
std::size_t bin_index(double pm25);

/// Checks that every entry is in [0,1] and the sum is 1 within `tol`.
bool is_valid_histogram(const Histogram& h, double tol = 1e-9);

enum class ForecastMode { Point, Probabilistic };

struct Horizon {
  int hours = 1;
  ForecastMode mode = ForecastMode::Point;

  /// Throws DomainError when hours < 1 or a probabilistic horizon is odd.
  static Horizon make(int hours, ForecastMode mode);
};

std::string_view to_string(ForecastMode mode);

}  // namespace delfi
