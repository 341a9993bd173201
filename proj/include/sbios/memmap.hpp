#ifndef SBIOS_MEMMAP_HPP
#define SBIOS_MEMMAP_HPP

#include <cstddef>
#include <cstdint>
#include <string>

namespace sbios {

// Read-only mmap of a whole file. Unmapping drops the pages from the
// resident set, which is what keeps batched passes within the memory
// contract.
class MappedFile {
 public:
  MappedFile() = default;
  explicit MappedFile(const std::string& path);
  ~MappedFile();
  MappedFile(MappedFile&& other) noexcept;
  MappedFile& operator=(MappedFile&& other) noexcept;
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;

  const uint8_t* data() const { return data_; }
  size_t size() const { return size_; }
  bool valid() const { return data_ != nullptr; }

  const double* f64_at(size_t byte_offset) const {
    return reinterpret_cast<const double*>(data_ + byte_offset);
  }

  void reset();

 private:
  const uint8_t* data_ = nullptr;
  size_t size_ = 0;
};

}  // namespace sbios

#endif
