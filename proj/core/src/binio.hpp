#pragma once

// Little-endian byte buffers for the binary containers.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "foley/error.hpp"

namespace foley::detail {

class ByteWriter {
 public:
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }

  const std::vector<char>& bytes() const noexcept { return bytes_; }

  void write_file(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw IoError("short write to " + path.string());
  }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> bytes, std::string label) : bytes_(std::move(bytes)), label_(std::move(label)) {}

  static ByteReader from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(bytes), path.string());
  }

  void expect_magic(std::string_view m) {
    need(m.size(), "magic");
    if (!std::equal(m.begin(), m.end(), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_))) {
      fail("bad magic, expected " + std::string(m));
    }
    pos_ += m.size();
  }
  std::uint8_t u8() {
    need(1, "u8");
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::size_t n = u32();
    need(n, "string");
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  /// Fails unless `count` items of `width` bytes remain.
  void require(std::uint64_t count, std::uint64_t width, const char* what) {
    if (width != 0 && count > (bytes_.size() - pos_) / width) fail(std::string("truncated ") + what);
  }

  std::size_t position() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& why) const { throw CodecError(label_ + ": " + why, pos_); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) fail(std::string("truncated ") + what);
  }

  std::vector<char> bytes_;
  std::string label_;
  std::size_t pos_ = 0;
};

}  // namespace foley::detail
