#include "binary_io.hpp"

#include <fstream>
#include <iterator>

#include <zlib.h>

namespace cetx::detail {

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, data, static_cast<uInt>(size)));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(what + ": cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes,
                const std::string& what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(what + ": cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(what + ": write failed for " + path.string());
}

std::size_t verify_checksum(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  if (bytes.size() < 4) throw FormatError(what + ": file is truncated");
  const std::size_t payload = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[payload + i]) << (8 * i);
  if (crc32_of(bytes.data(), payload) != stored) {
    throw FormatError(what + ": checksum mismatch (file corrupted or truncated)");
  }
  return payload;
}

}  // namespace cetx::detail
