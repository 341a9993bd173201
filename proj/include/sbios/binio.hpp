#ifndef SBIOS_BINIO_HPP
#define SBIOS_BINIO_HPP

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sbios/errors.hpp"

namespace sbios {

// All on-disk integers and floats are little-endian.
class BinWriter {
 public:
  explicit BinWriter(const std::string& path);
  ~BinWriter();
  BinWriter(const BinWriter&) = delete;
  BinWriter& operator=(const BinWriter&) = delete;

  void magic(const char tag[4]);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void f64(double v);
  void f64_array(const double* data, size_t count);
  void bytes(const uint8_t* data, size_t count);
  void close();

 private:
  std::FILE* f_ = nullptr;
  std::string path_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path);
  ~BinReader();
  BinReader(const BinReader&) = delete;
  BinReader& operator=(const BinReader&) = delete;

  void expect_magic(const char tag[4]);
  uint32_t u32();
  uint64_t u64();
  double f64();
  void f64_array(double* out, size_t count);
  void bytes(uint8_t* out, size_t count);

 private:
  std::FILE* f_ = nullptr;
  std::string path_;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

void write_f64_blob(const std::string& path, const char tag[4],
                    const Eigen::MatrixXd& m);
Eigen::MatrixXd read_f64_blob(const std::string& path, const char tag[4]);

// Bit-packed binary draws, LSB-first, byte-aligned columns ("SBDD").
void write_packed_draws(const std::string& path,
                        const std::vector<std::vector<uint8_t>>& draws,
                        size_t p);
std::vector<std::vector<uint8_t>> read_packed_draws(const std::string& path);

}  // namespace sbios

#endif
