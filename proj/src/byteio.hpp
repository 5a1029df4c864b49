// Little-endian scalar encoding shared by the container and dataset codecs.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

namespace dvsdrive::byteio {

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xFF));
    if constexpr (sizeof(T) > 1) u >>= 8;
  }
}

inline void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
inline void put_f32(std::string& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }

template <typename T>
T get_le(const char* p) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) {
    u = static_cast<U>((u << 8) | static_cast<unsigned char>(p[i]));
  }
  return static_cast<T>(u);
}

inline double get_f64(const char* p) { return std::bit_cast<double>(get_le<std::uint64_t>(p)); }
inline float get_f32(const char* p) { return std::bit_cast<float>(get_le<std::uint32_t>(p)); }

}  // namespace dvsdrive::byteio
