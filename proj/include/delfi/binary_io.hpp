#pragma once

// Minimal little-endian binary writer/reader used by the model, checkpoint
// and feature-cache formats.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace delfi::io {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void magic(std::string_view tag);
  void u64(std::uint64_t v);
  void i64(std::int64_t v);
  void f64(double v);
  void str(std::string_view s);
  void f64s(std::span<const double> values);

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  /// Throws FormatError unless the next bytes equal `tag`.
  void expect_magic(std::string_view tag);
  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  std::string str();
  std::vector<double> f64s();

 private:
  void read_bytes(void* dst, std::size_t n);
  std::istream& in_;
};

}  // namespace delfi::io
