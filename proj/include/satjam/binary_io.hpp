#pragma once

// Little-endian binary container helpers shared by dataset and model files:
// 4-byte magic at offset 0 and a CRC-32 (zlib polynomial) trailer covering
// every preceding byte.

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "satjam/errors.hpp"

namespace satjam {

namespace io {

inline std::uint32_t crc32_of(const std::string& bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

class Writer {
 public:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  // Appends CRC-32 of everything written so far.
  std::string finish() {
    u32(crc32_of(buf_));
    return std::move(buf_);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes, const char* what) : buf_(bytes), what_(what) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t n) const {
    const std::size_t lim = end_ ? end_ : buf_.size();
    if (lim - pos_ < n) throw FormatError(std::string(what_) + ": truncated payload", lim);
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  // Validates magic, and the CRC trailer over all preceding bytes.
  void check_envelope(const char magic[4]) {
    if (buf_.size() < 4 || std::memcmp(buf_.data(), magic, 4) != 0)
      throw FormatError(std::string(what_) + ": bad magic, expected '" + std::string(magic, 4) + "'", 0);
    if (buf_.size() < 8) throw FormatError(std::string(what_) + ": truncated payload", buf_.size());
    const std::size_t body = buf_.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
      stored |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf_[body + i])) << (8 * i);
    if (io::crc32_of(buf_.substr(0, body)) != stored)
      throw FormatError(std::string(what_) + ": checksum mismatch", body);
    pos_ = 4;
    end_ = body;
  }

  void expect_end() const {
    if (pos_ != end_) throw FormatError(std::string(what_) + ": trailing bytes before checksum", pos_);
  }

 private:
  const std::string& buf_;
  const char* what_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing '" + path + "'");
}

}  // namespace io

}  // namespace satjam
