#pragma once

// Little-endian primitives shared by the encoder, PCA and index artifacts.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "belforge/error.hpp"

namespace belforge::binary {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, 4);
}

inline void put_i64(std::ostream& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_f64s(std::ostream& out, std::span<const double> values) {
  for (double v : values) put_f64(out, v);
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw DataError(std::string("truncated artifact while reading ") + what);
  }
}

inline std::uint64_t get_u64(std::istream& in, const char* what) {
  unsigned char bytes[8];
  read_exact(in, reinterpret_cast<char*>(bytes), 8, what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

inline std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char bytes[4];
  read_exact(in, reinterpret_cast<char*>(bytes), 4, what);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

inline std::int64_t get_i64(std::istream& in, const char* what) {
  return static_cast<std::int64_t>(get_u64(in, what));
}

inline double get_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(get_u64(in, what));
}

inline std::vector<double> get_f64s(std::istream& in, std::size_t n, const char* what) {
  std::vector<double> values(n);
  for (auto& v : values) v = get_f64(in, what);
  return values;
}

inline std::string get_string(std::istream& in, const char* what, std::size_t max_len = 1 << 20) {
  const std::uint64_t n = get_u64(in, what);
  if (n > max_len) throw DataError(std::string("implausible string length in ") + what);
  std::string s(n, '\0');
  read_exact(in, s.data(), n, what);
  return s;
}

inline void expect_magic(std::istream& in, const char (&magic)[9], const char* what) {
  char got[8];
  read_exact(in, got, 8, what);
  if (std::memcmp(got, magic, 8) != 0) throw DataError(std::string("not a ") + what + " artifact");
}

inline void put_magic(std::ostream& out, const char (&magic)[9]) { out.write(magic, 8); }

}  // namespace belforge::binary
