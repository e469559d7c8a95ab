#pragma once

// Binary matrix files: an ASCII header "PHROM1 <rows> <cols>\n" followed by
// rows·cols little-endian float64 values in column-major order.

#include "phrom/errors.hpp"
#include "phrom/types.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace phrom::matio {

static_assert(std::endian::native == std::endian::little, "matio assumes a little-endian host");

inline constexpr const char* kMagic = "PHROM1";

inline void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << kMagic << ' ' << m.rows() << ' ' << m.cols() << '\n';
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!out) throw Error("write failed for " + path.string());
}

inline Matrix read_matrix(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFound("missing matrix file " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw MalformedSnapshot(path.string() + ": empty file");
  std::istringstream hs(header);
  std::string magic;
  long long rows = -1;
  long long cols = -1;
  hs >> magic >> rows >> cols;
  if (magic != kMagic || hs.fail() || rows < 0 || cols < 0) {
    throw MalformedSnapshot(path.string() + ": bad header '" + header + "'");
  }
  const auto header_bytes = static_cast<std::uintmax_t>(header.size() + 1);
  const auto expected = header_bytes + static_cast<std::uintmax_t>(rows) * static_cast<std::uintmax_t>(cols) * 8u;
  if (std::filesystem::file_size(path) != expected) {
    throw MalformedSnapshot(path.string() + ": payload size disagrees with header " + std::to_string(rows) + "x" +
                            std::to_string(cols));
  }
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in && m.size() > 0) throw MalformedSnapshot(path.string() + ": truncated payload");
  return m;
}

/// Human-readable export; one matrix row per line, 17 significant digits.
inline void write_csv(const std::filesystem::path& path, const Matrix& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

}  // namespace phrom::matio
