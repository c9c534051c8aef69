#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "resinv/errors.hpp"

namespace resinv::io {

// All binary artifacts are little-endian 64-bit fields. The helpers below
// byte-swap on big-endian hosts so files stay portable.

inline bool host_is_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char byte;
  std::memcpy(&byte, &probe, 1);
  return byte == 1;
}

inline std::uint64_t byteswap64(std::uint64_t v) {
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r = (r << 8) | ((v >> (8 * i)) & 0xFFu);
  return r;
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  if (!host_is_little_endian()) v = byteswap64(v);
  out.write(reinterpret_cast<const char*>(&v), 8);
}

inline void write_f64(std::ostream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(out, bits);
}

inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  if (!in) throw IoError("unexpected end of file while reading u64");
  if (!host_is_little_endian()) v = byteswap64(v);
  return v;
}

inline double read_f64(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

inline void write_vec(std::ostream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) write_f64(out, v[i]);
}

inline Eigen::VectorXd read_vec(std::istream& in, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = read_f64(in);
  return v;
}

inline void write_magic(std::ostream& out, const char magic[4]) {
  out.write(magic, 4);
}

inline void expect_magic(std::istream& in, const char magic[4],
                         const std::string& what) {
  char buf[4] = {};
  in.read(buf, 4);
  if (!in || std::memcmp(buf, magic, 4) != 0)
    throw IoError("bad magic in " + what + " file");
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

// Shortest round-trip decimal formatting, locale independent. Used for every
// CSV so identical runs emit identical bytes.
std::string format_double(double v);

}  // namespace resinv::io
