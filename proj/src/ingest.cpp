#include "delfi/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "delfi/binary_io.hpp"

namespace delfi {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

bool parse_fixed(std::string_view s, int& out) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return parse_number(s, out);
}

constexpr std::array<std::string_view, 9> kCsvColumns = {
    "timestamp", "pm1",        "pm10",       "pm25",        "temperature",
    "humidity",  "visibility", "wind_speed", "wind_bearing"};

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

std::int64_t parse_timestamp(std::string_view text) {
  text = trim(text);
  std::int64_t hours = 0;
  if (parse_number(text, hours)) return hours;

  // YYYY-MM-DD[T| ]HH[:MM[:SS]][Z]
  auto fail = [&]() -> IngestError {
    return IngestError("unparseable timestamp '" + std::string(text) + "'");
  };
  if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
  if (text.size() < 13 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' '))
    throw fail();
  int y, mo, d, h, mi = 0, sec = 0;
  if (!parse_fixed(text.substr(0, 4), y) || !parse_fixed(text.substr(5, 2), mo) ||
      !parse_fixed(text.substr(8, 2), d) || !parse_fixed(text.substr(11, 2), h))
    throw fail();
  auto rest = text.substr(13);
  if (!rest.empty()) {
    if (rest.size() < 3 || rest[0] != ':' || !parse_fixed(rest.substr(1, 2), mi)) throw fail();
    rest.remove_prefix(3);
    if (!rest.empty()) {
      if (rest.size() != 3 || rest[0] != ':' || !parse_fixed(rest.substr(1, 2), sec)) throw fail();
    }
  }
  if (mi != 0 || sec != 0) throw IngestError("timestamp '" + std::string(text) + "' is not on the hour");
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23) throw fail();
  return static_cast<std::int64_t>(sys_days{ymd}.time_since_epoch().count()) * 24 + h;
}

std::string format_timestamp(std::int64_t epoch_hour) {
  using namespace std::chrono;
  auto days = epoch_hour >= 0 ? epoch_hour / 24 : -((-epoch_hour + 23) / 24);
  auto hour = epoch_hour - days * 24;
  year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:00:00Z", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(hour));
  return buf;
}

StationLoad load_station_csv(const std::filesystem::path& path, const std::string& station_id) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open station file " + path.string());
  return parse_station_csv(in, station_id, path.string());
}

StationLoad parse_station_csv(std::istream& in, const std::string& station_id,
                              const std::string& source_name) {
  std::string line;
  if (!std::getline(in, line)) throw IngestError(source_name + ": empty file, header expected");
  auto header = split_csv(line);
  std::array<std::size_t, kCsvColumns.size()> col{};
  for (std::size_t c = 0; c < kCsvColumns.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), kCsvColumns[c]);
    if (it == header.end())
      throw IngestError(source_name + ": header is missing column '" + std::string(kCsvColumns[c]) + "'");
    col[c] = static_cast<std::size_t>(it - header.begin());
  }

  StationLoad result;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() < header.size()) {
      result.dropped.push_back({line_no, "expected " + std::to_string(header.size()) + " fields"});
      continue;
    }
    StationRecord rec;
    rec.station_id = station_id;
    try {
      rec.timestamp = parse_timestamp(cells[col[0]]);
    } catch (const IngestError& e) {
      result.dropped.push_back({line_no, e.what()});
      continue;
    }
    double* fields[] = {&rec.pm1,        &rec.pm10,     &rec.pm25,       &rec.temperature,
                        &rec.humidity,   &rec.visibility, &rec.wind_speed, &rec.wind_bearing};
    std::string bad;
    for (std::size_t c = 1; c < kCsvColumns.size(); ++c) {
      if (!parse_number(cells[col[c]], *fields[c - 1]) || !std::isfinite(*fields[c - 1])) {
        bad = "missing or unparseable " + std::string(kCsvColumns[c]);
        break;
      }
    }
    if (bad.empty()) {
      try {
        validate(rec);
      } catch (const DomainError& e) {
        bad = e.what();
      }
    }
    if (!bad.empty()) {
      result.dropped.push_back({line_no, bad});
      continue;
    }
    result.records.push_back(std::move(rec));
  }

  std::stable_sort(result.records.begin(), result.records.end(),
                   [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  for (std::size_t i = 1; i < result.records.size(); ++i) {
    if (result.records[i].timestamp == result.records[i - 1].timestamp)
      throw IngestError(source_name + ": duplicate timestamp " +
                        std::to_string(result.records[i].timestamp) + " (" +
                        format_timestamp(result.records[i].timestamp) + ")");
  }
  return result;
}

void write_station_csv(const std::filesystem::path& path, std::span<const StationRecord> records) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << "timestamp,pm1,pm10,pm25,temperature,humidity,visibility,wind_speed,wind_bearing\n";
  char buf[512];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(r.timestamp), r.pm1, r.pm10, r.pm25, r.temperature,
                  r.humidity, r.visibility, r.wind_speed, r.wind_bearing);
    out << buf;
  }
}

std::vector<StationEntry> load_station_meta(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open station metadata " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IngestError(path.string() + ": empty metadata file");
  auto header = split_csv(line);
  const std::array<std::string_view, 4> want = {"station_id", "latitude", "longitude", "path"};
  std::array<std::size_t, 4> col{};
  for (std::size_t c = 0; c < want.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), want[c]);
    if (it == header.end())
      throw IngestError(path.string() + ": header is missing column '" + std::string(want[c]) + "'");
    col[c] = static_cast<std::size_t>(it - header.begin());
  }
  std::vector<StationEntry> entries;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    auto where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() < header.size()) throw IngestError(where + ": too few fields");
    StationEntry e;
    e.meta.station_id = std::string(cells[col[0]]);
    if (!parse_number(cells[col[1]], e.meta.latitude) || !parse_number(cells[col[2]], e.meta.longitude))
      throw IngestError(where + ": bad coordinates");
    try {
      validate(e.meta);
    } catch (const DomainError& err) {
      throw IngestError(where + ": " + err.what());
    }
    std::filesystem::path p{std::string(cells[col[3]])};
    e.path = p.is_absolute() ? p : path.parent_path() / p;
    for (const auto& other : entries)
      if (other.meta.station_id == e.meta.station_id)
        throw IngestError(where + ": duplicate station_id " + e.meta.station_id);
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_station_meta(const std::filesystem::path& path, std::span<const StationEntry> entries) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << "station_id,latitude,longitude,path\n";
  char buf[64];
  for (const auto& e : entries) {
    out << e.meta.station_id << ',';
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", e.meta.latitude, e.meta.longitude);
    out << buf << ',' << e.path.generic_string() << '\n';
  }
}

double initial_bearing(double from_lat, double from_lon, double to_lat, double to_lon) {
  if (from_lat == to_lat && from_lon == to_lon)
    throw DomainError("initial_bearing: identical points have no bearing");
  const double p1 = from_lat * kDegToRad;
  const double p2 = to_lat * kDegToRad;
  const double dl = (to_lon - from_lon) * kDegToRad;
  const double y = std::sin(dl) * std::cos(p2);
  const double x = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
  double deg = std::atan2(y, x) / kDegToRad;
  deg = std::fmod(deg + 360.0, 360.0);
  return deg >= 360.0 ? 0.0 : deg;
}

BearingMatrix::BearingMatrix(std::span<const StationMeta> stations)
    : n_(stations.size()), deg_(n_ * n_, std::numeric_limits<double>::quiet_NaN()) {
  for (std::size_t a = 0; a < n_; ++a)
    for (std::size_t i = 0; i < n_; ++i)
      if (a != i)
        deg_[a * n_ + i] = initial_bearing(stations[a].latitude, stations[a].longitude,
                                           stations[i].latitude, stations[i].longitude);
}

double BearingMatrix::bearing(std::size_t from, std::size_t to) const {
  if (from >= n_ || to >= n_ || from == to) throw DomainError("bearing index out of range");
  return deg_[from * n_ + to];
}

double sigmoid(double x) {
  // Kept strictly inside (0,1) so downstream logs and ratios stay finite.
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return std::clamp(s, lo, hi);
}

double compute_nef(std::span<const FlowObservation> at_t, std::size_t target,
                   const BearingMatrix& bearings) {
  double x = 0.0;
  for (const auto& obs : at_t) {
    if (obs.station == target) continue;
    const double theta = bearings.bearing(target, obs.station);
    x += obs.pm25 * obs.wind_speed * std::cos((theta - obs.wind_bearing) * kDegToRad);
  }
  return sigmoid(x);
}

std::size_t train_row_count(std::size_t n, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw DomainError("train fraction must be in (0,1)");
  // Small epsilon so e.g. 0.85 * 100 lands on 85 rather than 84.999...
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction + 1e-9));
}

Standardizer::Standardizer(const std::array<double, kFeatureCount>& mean,
                           const std::array<double, kFeatureCount>& stddev)
    : fitted_(true), mean_(mean), std_(stddev) {
  for (std::size_t f = 0; f < kFeatureCount; ++f)
    if (!(std_[f] > 0.0) || !std::isfinite(mean_[f]))
      throw DomainError("standardizer: feature " + std::string(kFeatureNames[f]) +
                        " needs finite mean and positive std");
}

std::pair<double, double> pooled_train_stats(std::span<const StationSeries> stations, Feature f,
                                             double train_fraction) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : stations) {
    auto rows = train_row_count(s.rows.size(), train_fraction);
    for (std::size_t r = 0; r < rows; ++r) {
      double v = s.rows[r][idx(f)];
      if (std::isnan(v)) continue;
      sum += v;
      ++n;
    }
  }
  if (n == 0)
    throw DomainError("no training values for feature " + std::string(kFeatureNames[idx(f)]));
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& s : stations) {
    auto rows = train_row_count(s.rows.size(), train_fraction);
    for (std::size_t r = 0; r < rows; ++r) {
      double v = s.rows[r][idx(f)];
      if (std::isnan(v)) continue;
      ss += (v - mean) * (v - mean);
    }
  }
  const double sd = std::sqrt(ss / static_cast<double>(n));
  if (!(sd > 0.0))
    throw DomainError("feature " + std::string(kFeatureNames[idx(f)]) + " is constant on the training split");
  return {mean, sd};
}

Standardizer Standardizer::fit(std::span<const StationSeries> stations, double train_fraction) {
  std::array<double, kFeatureCount> mean{}, sd{};
  for (std::size_t f = 0; f < kFeatureCount; ++f)
    std::tie(mean[f], sd[f]) = pooled_train_stats(stations, static_cast<Feature>(f), train_fraction);
  return Standardizer(mean, sd);
}

void Standardizer::require_fitted() const {
  if (!fitted_) throw UsageError("standardizer used before fitting");
}

double Standardizer::transform(Feature f, double raw) const {
  require_fitted();
  return (raw - mean_[idx(f)]) / std_[idx(f)];
}

double Standardizer::inverse(Feature f, double z) const {
  require_fitted();
  return z * std_[idx(f)] + mean_[idx(f)];
}

FeatureRow Standardizer::transform(const FeatureRow& raw) const {
  require_fitted();
  FeatureRow z;
  for (std::size_t f = 0; f < kFeatureCount; ++f) z[f] = (raw[f] - mean_[f]) / std_[f];
  return z;
}

FeatureRow Standardizer::inverse(const FeatureRow& z) const {
  require_fitted();
  FeatureRow raw;
  for (std::size_t f = 0; f < kFeatureCount; ++f) raw[f] = z[f] * std_[f] + mean_[f];
  return raw;
}

FeatureSet featurize(std::span<const StationMeta> metas,
                     std::span<const std::vector<StationRecord>> records, double train_fraction) {
  if (metas.size() != records.size())
    throw UsageError("featurize: metadata and record lists differ in length");
  FeatureSet fs;
  fs.train_fraction = train_fraction;
  fs.stations.resize(metas.size());
  for (std::size_t s = 0; s < metas.size(); ++s) {
    validate(metas[s]);
    auto& series = fs.stations[s];
    series.meta = metas[s];
    series.timestamps.reserve(records[s].size());
    series.rows.reserve(records[s].size());
    for (const auto& rec : records[s]) {
      if (!series.timestamps.empty() && rec.timestamp <= series.timestamps.back())
        throw IngestError("station " + metas[s].station_id + ": timestamps not strictly increasing at " +
                          std::to_string(rec.timestamp));
      series.timestamps.push_back(rec.timestamp);
      series.rows.push_back(rec.to_row());
    }
  }

  const auto [pm_mean, pm_sd] = pooled_train_stats(fs.stations, Feature::Pm25, train_fraction);
  const auto [v_mean, v_sd] = pooled_train_stats(fs.stations, Feature::WindSpeed, train_fraction);
  const BearingMatrix bearings(metas);

  // timestamp -> row index per station
  std::vector<std::unordered_map<std::int64_t, std::size_t>> index(fs.stations.size());
  for (std::size_t s = 0; s < fs.stations.size(); ++s) {
    const auto& ts = fs.stations[s].timestamps;
    index[s].reserve(ts.size());
    for (std::size_t r = 0; r < ts.size(); ++r) index[s].emplace(ts[r], r);
  }

  std::vector<FlowObservation> obs;
  for (std::size_t a = 0; a < fs.stations.size(); ++a) {
    auto& series = fs.stations[a];
    for (std::size_t r = 0; r < series.rows.size(); ++r) {
      const auto t = series.timestamps[r];
      obs.clear();
      bool complete = true;
      for (std::size_t i = 0; i < fs.stations.size(); ++i) {
        if (i == a) continue;
        auto it = index[i].find(t);
        if (it == index[i].end()) {
          complete = false;
          break;
        }
        const auto& row = fs.stations[i].rows[it->second];
        obs.push_back({i, (row[idx(Feature::Pm25)] - pm_mean) / pm_sd,
                       (row[idx(Feature::WindSpeed)] - v_mean) / v_sd, row[idx(Feature::WindBearing)]});
      }
      series.rows[r][idx(Feature::Nef)] =
          complete ? compute_nef(obs, a, bearings) : std::numeric_limits<double>::quiet_NaN();
    }
  }

  fs.standardizer = Standardizer::fit(fs.stations, train_fraction);
  return fs;
}

namespace {
constexpr std::string_view kFeatureMagic = "DELFIFEAT";
constexpr std::uint64_t kFeatureVersion = 1;
}  // namespace

void save_feature_set(const std::filesystem::path& path, const FeatureSet& fs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + path.string());
  io::BinaryWriter w(out);
  w.magic(kFeatureMagic);
  w.u64(kFeatureVersion);
  w.f64(fs.train_fraction);
  w.f64s(fs.standardizer.mean());
  w.f64s(fs.standardizer.stddev());
  w.u64(fs.stations.size());
  std::vector<double> flat;
  for (const auto& s : fs.stations) {
    w.str(s.meta.station_id);
    w.f64(s.meta.latitude);
    w.f64(s.meta.longitude);
    w.u64(s.timestamps.size());
    for (auto t : s.timestamps) w.i64(t);
    flat.clear();
    for (const auto& row : s.rows) flat.insert(flat.end(), row.begin(), row.end());
    w.f64s(flat);
  }
  if (!out) throw IngestError("write failed for " + path.string());
}

FeatureSet load_feature_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open feature set " + path.string());
  io::BinaryReader r(in);
  r.expect_magic(kFeatureMagic);
  if (auto v = r.u64(); v != kFeatureVersion)
    throw FormatError("unsupported feature set version " + std::to_string(v));
  FeatureSet fs;
  fs.train_fraction = r.f64();
  auto mean = r.f64s();
  auto sd = r.f64s();
  if (mean.size() != kFeatureCount || sd.size() != kFeatureCount)
    throw FormatError("feature set: bad standardizer shape");
  std::array<double, kFeatureCount> m{}, s{};
  std::copy(mean.begin(), mean.end(), m.begin());
  std::copy(sd.begin(), sd.end(), s.begin());
  fs.standardizer = Standardizer(m, s);
  auto n = r.u64();
  fs.stations.resize(n);
  for (auto& st : fs.stations) {
    st.meta.station_id = r.str();
    st.meta.latitude = r.f64();
    st.meta.longitude = r.f64();
    auto rows = r.u64();
    st.timestamps.resize(rows);
    for (auto& t : st.timestamps) t = r.i64();
    auto flat = r.f64s();
    if (flat.size() != rows * kFeatureCount) throw FormatError("feature set: bad row block");
    st.rows.resize(rows);
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(i * kFeatureCount), kFeatureCount,
                  st.rows[i].begin());
  }
  return fs;
}

}  // namespace delfi
