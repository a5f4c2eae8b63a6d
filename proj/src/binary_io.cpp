#include "delfi/binary_io.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "delfi/data_model.hpp"

namespace delfi::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace {
constexpr std::uint64_t kMaxLength = std::uint64_t{1} << 40;
}

void BinaryWriter::magic(std::string_view tag) {
  out_.write(tag.data(), static_cast<std::streamsize>(tag.size()));
}

void BinaryWriter::u64(std::uint64_t v) {
  out_.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void BinaryWriter::i64(std::int64_t v) {
  out_.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void BinaryWriter::f64(double v) {
  out_.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void BinaryWriter::str(std::string_view s) {
  u64(s.size());
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryWriter::f64s(std::span<const double> values) {
  u64(values.size());
  out_.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size_bytes()));
}

void BinaryReader::read_bytes(void* dst, std::size_t n) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError("unexpected end of file");
}

void BinaryReader::expect_magic(std::string_view tag) {
  std::string buf(tag.size(), '\0');
  read_bytes(buf.data(), buf.size());
  if (buf != tag) throw FormatError("bad magic: expected '" + std::string(tag) + "'");
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  read_bytes(&v, sizeof v);
  return v;
}

std::int64_t BinaryReader::i64() {
  std::int64_t v;
  read_bytes(&v, sizeof v);
  return v;
}

double BinaryReader::f64() {
  double v;
  read_bytes(&v, sizeof v);
  return v;
}

std::string BinaryReader::str() {
  auto n = u64();
  if (n > kMaxLength) throw FormatError("string length out of range");
  std::string s(n, '\0');
  read_bytes(s.data(), n);
  return s;
}

std::vector<double> BinaryReader::f64s() {
  auto n = u64();
  if (n > kMaxLength) throw FormatError("array length out of range");
  std::vector<double> v(n);
  read_bytes(v.data(), n * sizeof(double));
  return v;
}

}  // namespace delfi::io
