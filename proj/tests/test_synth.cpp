#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "delfi/synth.hpp"

using namespace delfi;

namespace {

std::vector<double> pm_series(const synth::Dataset& d, std::size_t i) {
  std::vector<double> out;
  for (const auto& r : d.records[i]) out.push_back(r.pm25);
  return out;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b, std::size_t lag) {
  const std::size_t n = a.size() - lag;
  double ma = 0, mb = 0;
  for (std::size_t t = 0; t < n; ++t) {
    ma += a[t + lag];
    mb += b[t];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double x = a[t + lag] - ma, y = b[t] - mb;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  return sab / std::sqrt(saa * sbb);
}

double mean_lagged_correlation(const synth::Dataset& d) {
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < d.stations.size(); ++i)
    for (std::size_t j = 0; j < d.stations.size(); ++j)
      if (i != j)
        for (std::size_t lag = 1; lag <= 3; ++lag) {
          sum += correlation(pm_series(d, i), pm_series(d, j), lag);
          ++count;
        }
  return sum / count;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
  const auto a = synth::generate(4, 300, 9), b = synth::generate(4, 300, 9), c = synth::generate(4, 300, 10);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(pm_series(a, i) == pm_series(b, i));
    CHECK(a.stations[i].latitude == b.stations[i].latitude);
    CHECK(a.records[i].back().wind_bearing == b.records[i].back().wind_bearing);
  }
  CHECK_FALSE(pm_series(a, 0) == pm_series(c, 0));
}

TEST_CASE("records are valid, hourly and inside the area") {
  const auto d = synth::generate(5, 400, 3);
  REQUIRE(d.records.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(d.spike_group[i] == i % 3);
    CHECK(d.stations[i].latitude > 28.4);
    CHECK(d.stations[i].latitude < 28.7);
    REQUIRE(d.records[i].size() == 400);
    for (std::size_t t = 0; t < 400; ++t) {
      const auto& r = d.records[i][t];
      CHECK_NOTHROW(validate(r));
      CHECK(r.timestamp == synth::start_hour() + static_cast<std::int64_t>(t));
      CHECK(r.station_id == d.stations[i].station_id);
    }
  }
  CHECK_THROWS_AS(synth::generate(2, 400, 1), DomainError);
  CHECK_THROWS_AS(synth::generate(3, 100, 1), DomainError);
}

TEST_CASE("hourly change variance grows with the spike rate") {
  const auto d = synth::generate(12, 3000, 5);
  std::array<double, 3> var{};
  for (std::size_t i = 0; i < 12; ++i) {
    const auto pm = pm_series(d, i);
    double s = 0.0;
    for (std::size_t t = 1; t < pm.size(); ++t) s += (pm[t] - pm[t - 1]) * (pm[t] - pm[t - 1]);
    var[d.spike_group[i]] += s / static_cast<double>(pm.size() - 1) / 4.0;
  }
  CHECK(var[0] < var[1]);
  CHECK(var[1] < var[2]);
}

TEST_CASE("advection couples stations at a lag") {
  synth::Profile still;
  still.advection = 0.0;
  const auto with = synth::generate(6, 1500, 7);
  const auto without = synth::generate(6, 1500, 7, still);
  CHECK(mean_lagged_correlation(with) > mean_lagged_correlation(without) + 0.05);
}

TEST_CASE("PM2.5 visits most AQI bins") {
  const auto d = synth::generate(6, 2000, 8);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t from = 0; from + 500 <= 2000; from += 500) {
      std::set<std::size_t> bins;
      for (std::size_t t = from; t < from + 500; ++t) bins.insert(bin_index(d.records[i][t].pm25));
      CHECK_MESSAGE(bins.size() >= 4, "station ", i, " block ", from);
    }
}

TEST_CASE("dataset files round trip through the loader") {
  const auto d = synth::generate(3, 250, 2);
  const auto dir = std::filesystem::temp_directory_path() / "delfi_synth_test";
  std::filesystem::remove_all(dir);
  synth::write_dataset(dir, d);
  CHECK(std::filesystem::exists(dir / "stations.csv"));
  for (const auto& s : d.stations) CHECK(std::filesystem::exists(dir / (s.station_id + ".csv")));
  std::filesystem::remove_all(dir);
}
