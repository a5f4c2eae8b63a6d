#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "delfi/binary_io.hpp"
#include "delfi/data_model.hpp"
#include "delfi/rng.hpp"

using namespace delfi;

TEST_CASE("bin_index uses left-closed intervals") {
  CHECK(bin_index(0.0) == 0);
  CHECK(bin_index(29.999) == 0);
  CHECK(bin_index(30.0) == 1);
  CHECK(bin_index(60.0) == 2);
  CHECK(bin_index(90.0) == 3);
  CHECK(bin_index(119.99) == 3);
  CHECK(bin_index(120.0) == 4);
  CHECK(bin_index(249.999) == 4);
  CHECK(bin_index(250.0) == 5);
  CHECK(bin_index(1e6) == 5);
}

TEST_CASE("bin_index rejects negative and non-finite input") {
  CHECK_THROWS_AS(bin_index(-0.1), DomainError);
  CHECK_THROWS_AS(bin_index(std::numeric_limits<double>::quiet_NaN()), DomainError);
  CHECK_THROWS_AS(bin_index(std::numeric_limits<double>::infinity()), DomainError);
}

TEST_CASE("histogram validity") {
  CHECK(is_valid_histogram({1, 0, 0, 0, 0, 0}));
  CHECK(is_valid_histogram({0.5, 0, 0, 0, 0, 0.5}));
  CHECK_FALSE(is_valid_histogram({0.5, 0, 0, 0, 0, 0.49}));
  CHECK_FALSE(is_valid_histogram({1.5, -0.5, 0, 0, 0, 0}));
}

TEST_CASE("probabilistic horizons must be even") {
  CHECK(Horizon::make(12, ForecastMode::Probabilistic).hours == 12);
  CHECK(Horizon::make(3, ForecastMode::Point).hours == 3);
  CHECK_THROWS_AS(Horizon::make(7, ForecastMode::Probabilistic), DomainError);
  CHECK_THROWS_AS(Horizon::make(0, ForecastMode::Point), DomainError);
  CHECK(to_string(ForecastMode::Probabilistic) == "probabilistic");
}

TEST_CASE("record validation") {
  StationRecord r;
  r.station_id = "S1";
  r.pm25 = 40;
  r.humidity = 50;
  r.wind_bearing = 359.9;
  CHECK_NOTHROW(validate(r));
  auto bad = r;
  bad.pm25 = -1;
  CHECK_THROWS_AS(validate(bad), DomainError);
  bad = r;
  bad.wind_bearing = 360.0;
  CHECK_THROWS_AS(validate(bad), DomainError);
  bad = r;
  bad.humidity = 101;
  CHECK_THROWS_AS(validate(bad), DomainError);

  const auto row = r.to_row();
  CHECK(row[idx(Feature::Pm25)] == 40);
  CHECK(std::isnan(row[idx(Feature::Nef)]));
}

TEST_CASE("station metadata validation") {
  CHECK_NOTHROW(validate(StationMeta{"A", 28.5, 77.1}));
  CHECK_THROWS_AS(validate(StationMeta{"", 28.5, 77.1}), DomainError);
  CHECK_THROWS_AS(validate(StationMeta{"A", 91, 0}), DomainError);
  CHECK_THROWS_AS(validate(StationMeta{"A", 0, -181}), DomainError);
}

TEST_CASE("feature window accessor is time-major") {
  FeatureWindow w;
  for (std::size_t i = 0; i < kWindowSize; ++i) w.values[i] = static_cast<double>(i);
  CHECK(w.at(0, Feature::Pm1) == 0.0);
  CHECK(w.at(2, Feature::Pm25) == 2 * 9 + 2);
  CHECK(w.at(5, Feature::Nef) == kWindowSize - 1);
}

TEST_CASE("binary round trip and format errors") {
  std::stringstream ss;
  {
    io::BinaryWriter w(ss);
    w.magic("TESTMAG");
    w.u64(42);
    w.i64(-7);
    w.f64(0.1);
    w.str("hello");
    std::vector<double> v = {1.5, -2.25, 1e-300};
    w.f64s(v);
  }
  io::BinaryReader r(ss);
  r.expect_magic("TESTMAG");
  CHECK(r.u64() == 42);
  CHECK(r.i64() == -7);
  CHECK(r.f64() == 0.1);
  CHECK(r.str() == "hello");
  CHECK(r.f64s() == std::vector<double>{1.5, -2.25, 1e-300});
  CHECK_THROWS_AS(r.u64(), FormatError);

  std::stringstream other("NOTMAGIC....");
  io::BinaryReader r2(other);
  CHECK_THROWS_AS(r2.expect_magic("TESTMAG"), FormatError);
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a(derive_seed(5, 1)), b(derive_seed(5, 1)), c(derive_seed(5, 2));
  bool differs = false;
  for (int i = 0; i < 10; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    differs = differs || x != c.uniform();
  }
  CHECK(differs);
  Rng d(3);
  for (int i = 0; i < 1000; ++i) CHECK(d.below(7) < 7);
}
