#pragma once

// Binary field snapshots.
//
// 32-byte header, all integers little-endian:
//   bytes  0..3   magic "CFLD"
//   bytes  4..5   version (u16)
//   bytes  6..7   dim (u16)
//   bytes  8..9   rank p (u16)
//   bytes 10..11  rank q (u16)
//   bytes 12..27  N_i (u32) for i = 0..3, unused axes zero
//   bytes 28..31  reserved, zero
// followed by float64 little-endian components in row-major node order,
// index tuple fastest. Lengths and fd_order travel in the run manifest.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "curveflow/grid.hpp"

namespace curveflow {

constexpr std::uint16_t kSnapshotVersion = 1;
constexpr std::size_t kSnapshotHeaderBytes = 32;

struct SnapshotHeader {
  std::uint16_t version = kSnapshotVersion;
  std::uint16_t dim = 0;
  std::uint16_t p = 0;
  std::uint16_t q = 0;
  std::array<std::uint32_t, kMaxDim> extents{};
};

namespace detail {

inline void put_le(unsigned char* out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
}

inline std::uint64_t get_le(const unsigned char* in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void write_snapshot(std::ostream& os, const TensorField& t) {
  std::array<unsigned char, kSnapshotHeaderBytes> hdr{};
  std::memcpy(hdr.data(), "CFLD", 4);
  detail::put_le(hdr.data() + 4, kSnapshotVersion, 2);
  detail::put_le(hdr.data() + 6, static_cast<std::uint64_t>(t.dim()), 2);
  detail::put_le(hdr.data() + 8, static_cast<std::uint64_t>(t.rank().up), 2);
  detail::put_le(hdr.data() + 10, static_cast<std::uint64_t>(t.rank().down), 2);
  for (int i = 0; i < t.dim(); ++i)
    detail::put_le(hdr.data() + 12 + 4 * i, static_cast<std::uint64_t>(t.grid().extents[i]), 4);
  os.write(reinterpret_cast<const char*>(hdr.data()), hdr.size());
  std::array<unsigned char, 8> buf{};
  for (double v : t.data()) {
    detail::put_le(buf.data(), std::bit_cast<std::uint64_t>(v), 8);
    os.write(reinterpret_cast<const char*>(buf.data()), 8);
  }
  if (!os) throw Error("snapshot write failed");
}

inline SnapshotHeader read_snapshot_header(std::istream& is) {
  std::array<unsigned char, kSnapshotHeaderBytes> hdr{};
  is.read(reinterpret_cast<char*>(hdr.data()), hdr.size());
  if (!is) throw DomainError("snapshot truncated in header");
  if (std::memcmp(hdr.data(), "CFLD", 4) != 0) throw DomainError("bad snapshot magic");
  SnapshotHeader h;
  h.version = static_cast<std::uint16_t>(detail::get_le(hdr.data() + 4, 2));
  h.dim = static_cast<std::uint16_t>(detail::get_le(hdr.data() + 6, 2));
  h.p = static_cast<std::uint16_t>(detail::get_le(hdr.data() + 8, 2));
  h.q = static_cast<std::uint16_t>(detail::get_le(hdr.data() + 10, 2));
  for (int i = 0; i < kMaxDim; ++i) h.extents[i] = static_cast<std::uint32_t>(detail::get_le(hdr.data() + 12 + 4 * i, 4));
  if (h.version != kSnapshotVersion) throw DomainError("unsupported snapshot version " + std::to_string(h.version));
  if (h.dim < 2 || h.dim > kMaxDim) throw DomainError("snapshot dimension out of range");
  return h;
}

// Reads a snapshot onto `grid`, whose dim and extents must match the header.
inline TensorField read_snapshot(std::istream& is, const ChartGrid& grid) {
  const SnapshotHeader h = read_snapshot_header(is);
  if (h.dim != grid.dim) throw GridMismatch("snapshot dimension does not match grid");
  for (int i = 0; i < grid.dim; ++i)
    if (static_cast<int>(h.extents[i]) != grid.extents[i]) throw GridMismatch("snapshot extents do not match grid");
  TensorField t(grid, {h.p, h.q});
  std::array<unsigned char, 8> buf{};
  for (double& v : t.data()) {
    is.read(reinterpret_cast<char*>(buf.data()), 8);
    if (!is) throw DomainError("snapshot truncated in payload");
    v = std::bit_cast<double>(detail::get_le(buf.data(), 8));
  }
  return t;
}

inline void save_snapshot(const std::string& path, const TensorField& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_snapshot(os, t);
}

inline TensorField load_snapshot(const std::string& path, const ChartGrid& grid) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DomainError("cannot open snapshot " + path);
  return read_snapshot(is, grid);
}

}  // namespace curveflow
