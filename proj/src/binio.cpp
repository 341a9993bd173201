#include "sbios/binio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sbios {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; byte-swapping not implemented");

BinWriter::BinWriter(const std::string& path) : path_(path) {
  f_ = std::fopen(path.c_str(), "wb");
  if (!f_) throw io_error("cannot open for write: " + path);
}

BinWriter::~BinWriter() {
  if (f_) std::fclose(f_);
}

void BinWriter::magic(const char tag[4]) { bytes(reinterpret_cast<const uint8_t*>(tag), 4); }
void BinWriter::u32(uint32_t v) { bytes(reinterpret_cast<const uint8_t*>(&v), 4); }
void BinWriter::u64(uint64_t v) { bytes(reinterpret_cast<const uint8_t*>(&v), 8); }
void BinWriter::f64(double v) { bytes(reinterpret_cast<const uint8_t*>(&v), 8); }

void BinWriter::f64_array(const double* data, size_t count) {
  bytes(reinterpret_cast<const uint8_t*>(data), count * 8);
}

void BinWriter::bytes(const uint8_t* data, size_t count) {
  if (std::fwrite(data, 1, count, f_) != count)
    throw io_error("short write: " + path_);
}

void BinWriter::close() {
  if (f_) {
    if (std::fclose(f_) != 0) throw io_error("close failed: " + path_);
    f_ = nullptr;
  }
}

BinReader::BinReader(const std::string& path) : path_(path) {
  f_ = std::fopen(path.c_str(), "rb");
  if (!f_) throw io_error("cannot open for read: " + path);
}

BinReader::~BinReader() {
  if (f_) std::fclose(f_);
}

void BinReader::expect_magic(const char tag[4]) {
  uint8_t got[4];
  bytes(got, 4);
  if (std::memcmp(got, tag, 4) != 0)
    throw schema_error("bad magic in " + path_ + " (expected " +
                       std::string(tag, 4) + ")");
}

uint32_t BinReader::u32() {
  uint32_t v;
  bytes(reinterpret_cast<uint8_t*>(&v), 4);
  return v;
}

uint64_t BinReader::u64() {
  uint64_t v;
  bytes(reinterpret_cast<uint8_t*>(&v), 8);
  return v;
}

double BinReader::f64() {
  double v;
  bytes(reinterpret_cast<uint8_t*>(&v), 8);
  return v;
}

void BinReader::f64_array(double* out, size_t count) {
  bytes(reinterpret_cast<uint8_t*>(out), count * 8);
}

void BinReader::bytes(uint8_t* out, size_t count) {
  if (std::fread(out, 1, count, f_) != count)
    throw schema_error("truncated file: " + path_);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open for write: " + path);
  out << content;
  if (!out) throw io_error("short write: " + path);
}

void write_f64_blob(const std::string& path, const char tag[4],
                    const Eigen::MatrixXd& m) {
  BinWriter w(path);
  w.magic(tag);
  w.u32(1);
  w.u64(static_cast<uint64_t>(m.rows()));
  w.u64(static_cast<uint64_t>(m.cols()));
  w.f64_array(m.data(), static_cast<size_t>(m.size()));
  w.close();
}

Eigen::MatrixXd read_f64_blob(const std::string& path, const char tag[4]) {
  BinReader r(path);
  r.expect_magic(tag);
  if (r.u32() != 1) throw schema_error("unsupported version in " + path);
  const uint64_t rows = r.u64();
  const uint64_t cols = r.u64();
  Eigen::MatrixXd m(rows, cols);
  r.f64_array(m.data(), static_cast<size_t>(m.size()));
  return m;
}

void write_packed_draws(const std::string& path,
                        const std::vector<std::vector<uint8_t>>& draws,
                        size_t p) {
  BinWriter w(path);
  w.magic("SBDD");
  w.u32(1);
  w.u64(static_cast<uint64_t>(p));
  w.u64(static_cast<uint64_t>(draws.size()));
  const size_t stride = (p + 7) / 8;
  std::vector<uint8_t> packed(stride);
  for (const auto& d : draws) {
    std::fill(packed.begin(), packed.end(), 0);
    for (size_t j = 0; j < p; ++j)
      if (d[j]) packed[j >> 3] |= static_cast<uint8_t>(1u << (j & 7));
    w.bytes(packed.data(), stride);
  }
  w.close();
}

std::vector<std::vector<uint8_t>> read_packed_draws(const std::string& path) {
  BinReader r(path);
  r.expect_magic("SBDD");
  if (r.u32() != 1) throw schema_error("unsupported SBDD version: " + path);
  const size_t p = r.u64();
  const size_t m = r.u64();
  const size_t stride = (p + 7) / 8;
  std::vector<uint8_t> packed(stride);
  std::vector<std::vector<uint8_t>> draws(m, std::vector<uint8_t>(p));
  for (size_t d = 0; d < m; ++d) {
    r.bytes(packed.data(), stride);
    for (size_t j = 0; j < p; ++j)
      draws[d][j] = (packed[j >> 3] >> (j & 7)) & 1;
  }
  return draws;
}

}  // namespace sbios
