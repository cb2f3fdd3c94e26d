#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace gw {

// Little-endian byte packing helpers shared by the checkpoint and frame
// formats. Field order is explicit so the formats stay bit-exact across
// hosts.

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

inline void put_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_u64le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_f32le(std::vector<std::uint8_t>& out, float v) {
  put_u32le(out, std::bit_cast<std::uint32_t>(v));
}

// Bounds-checked sequential reader; ok() turns false on the first short read.
struct ByteReader {
  const std::uint8_t* data = nullptr;
  std::size_t size = 0;
  std::size_t pos = 0;
  bool failed = false;

  ByteReader(const std::uint8_t* d, std::size_t s) : data(d), size(s) {}

  bool ok() const { return !failed; }
  std::size_t remaining() const { return size - pos; }

  bool take(std::size_t n) {
    if (failed || size - pos < n) {
      failed = true;
      return false;
    }
    return true;
  }

  std::uint8_t u8() {
    if (!take(1)) return 0;
    return data[pos++];
  }

  std::uint16_t u16le() {
    if (!take(2)) return 0;
    std::uint16_t v = static_cast<std::uint16_t>(data[pos] | (data[pos + 1] << 8));
    pos += 2;
    return v;
  }

  std::uint32_t u32le() {
    if (!take(4)) return 0;
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }

  std::uint64_t u64le() {
    if (!take(8)) return 0;
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }

  float f32le() { return std::bit_cast<float>(u32le()); }

  bool bytes(void* dst, std::size_t n) {
    if (!take(n)) return false;
    std::memcpy(dst, data + pos, n);
    pos += n;
    return true;
  }
};

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 14695981039346656037ull) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path, std::string& error);
bool write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes,
                      std::string& error);

}  // namespace gw
