#include "slt/binary_io.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

namespace slt {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string_view ByteReader::take(std::size_t n) {
  if (n > data_.size() - pos_) {
    fail("truncated: need " + std::to_string(n) + " bytes, " + std::to_string(data_.size() - pos_) + " remain");
  }
  std::string_view v(data_.data() + pos_, n);
  pos_ += n;
  return v;
}

void ByteReader::verify_checksum() {
  const std::size_t at = pos_;
  const std::uint64_t expect = fnv1a64(std::string_view(data_.data(), at));
  const std::uint64_t stored = u64();
  if (stored != expect) {
    pos_ = at;
    fail("checksum mismatch");
  }
  if (pos_ != data_.size()) fail("trailing bytes after checksum");
}

void ByteReader::fail_at(std::size_t offset, const std::string& what) const {
  throw FormatError(label_ + ": " + what + " at byte offset " + std::to_string(offset));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace slt
