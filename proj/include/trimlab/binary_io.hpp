#pragma once

// Little-endian byte encoding shared by the checkpoint and dataset formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trimlab/error.hpp"

namespace trimlab {

/// FNV-1a, 64-bit.
constexpr std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                                std::uint64_t h = 0xCBF29CE484222325ULL) noexcept {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001B3ULL;
  }
  return h;
}

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { little(v, 2); }
  void u32(std::uint32_t v) { little(v, 4); }
  void u64(std::uint64_t v) { little(v, 8); }
  void f64(double v) { little(std::bit_cast<std::uint64_t>(v), 8); }

  /// Appends the FNV-1a checksum of everything written so far.
  void checksum() { u64(fnv1a64(buf_)); }

  const std::vector<std::uint8_t>& data() const noexcept { return buf_; }
  std::vector<std::uint8_t> release() noexcept { return std::move(buf_); }

 private:
  void little(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  /// Throws FormatError naming the first mismatching byte.
  void expect_magic(std::string_view magic, std::string_view what) {
    need(magic.size(), what);
    for (std::size_t i = 0; i < magic.size(); ++i) {
      if (data_[pos_ + i] != static_cast<std::uint8_t>(magic[i]))
        throw FormatError(std::string(what) + ": bad magic, expected \"" + std::string(magic) + "\"",
                          pos_ + i);
    }
    pos_ += magic.size();
  }

  std::uint8_t u8(std::string_view what) { return static_cast<std::uint8_t>(little(1, what)); }
  std::uint16_t u16(std::string_view what) { return static_cast<std::uint16_t>(little(2, what)); }
  std::uint32_t u32(std::string_view what) { return static_cast<std::uint32_t>(little(4, what)); }
  std::uint64_t u64(std::string_view what) { return little(8, what); }
  double f64(std::string_view what) { return std::bit_cast<double>(little(8, what)); }

  /// Reads the trailing checksum and compares it against every byte before it.
  void verify_checksum(std::string_view what) {
    const std::uint64_t expected = fnv1a64(data_.first(pos_));
    const std::uint64_t stored = u64(what);
    if (stored != expected) throw ChecksumError(std::string(what) + ": checksum mismatch");
  }

  /// Throws FormatError when bytes remain after the payload.
  void expect_end(std::string_view what) const {
    if (pos_ != data_.size()) throw FormatError(std::string(what) + ": trailing bytes", pos_);
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  void need(std::size_t n, std::string_view what) const {
    if (data_.size() - pos_ < n)
      throw TruncatedError(std::string(what) + ": file truncated", data_.size());
  }

 private:
  std::uint64_t little(int n, std::string_view what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace trimlab
