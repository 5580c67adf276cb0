#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emospec/error.hpp"

namespace emospec::io {

namespace fs = std::filesystem;

// Writes to "<path>.tmp" and renames over `path`.
inline void write_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw DataError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

template <typename T>
inline T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

// Little-endian append/read of trivially copyable scalars.
template <typename T>
inline void put_le(std::string& buf, T v) {
  v = byteswap_if_big(v);
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void put_f32_le(std::string& buf, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    buf.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
  } else {
    for (float v : values) put_le(buf, v);
  }
}

class Reader {
 public:
  Reader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return byteswap_if_big(v);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void get_f32(std::span<float> out) {
    need(out.size_bytes());
    std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
    if constexpr (std::endian::native == std::endian::big)
      for (float& v : out) v = byteswap_if_big(v);
    pos_ += out.size_bytes();
  }

  [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw DataError(what_ + ": unexpected end of data (need " + std::to_string(n) + " bytes at offset " +
                      std::to_string(pos_) + ", have " + std::to_string(bytes_.size() - pos_) + ")");
  }

  std::string_view bytes_;
  std::string what_;
  std::size_t pos_{0};
};

}  // namespace emospec::io
