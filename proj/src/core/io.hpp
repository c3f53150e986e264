#ifndef UQEVAL_CORE_IO_HPP_
#define UQEVAL_CORE_IO_HPP_

#include <cstdint>
#include <string>

namespace uqeval {

// Writes contents to path via a temp file + rename so readers never observe
// a partial file.
void atomic_write_file(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

// Little-endian scalar packing for the binary checkpoint format.
void append_u32(std::string& buf, std::uint32_t v);
void append_u64(std::string& buf, std::uint64_t v);
void append_f64(std::string& buf, double v);

// Cursor-based readers; throw DataError on truncation.
struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  explicit ByteReader(const std::string& b) : buf(b) {}
  void require(std::size_t n) const;
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string bytes(std::size_t n);
  bool at_end() const { return pos == buf.size(); }
};

}  // namespace uqeval

#endif  // UQEVAL_CORE_IO_HPP_
