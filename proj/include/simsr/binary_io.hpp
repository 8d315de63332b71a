#pragma once

#include "simsr/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace simsr::binio {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void put_f32(std::ostream& out, double value) { put(out, static_cast<float>(value)); }

inline void put_magic(std::ostream& out, std::string_view magic) { out.write(magic.data(), 4); }

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(Errc::parse_failure, "unexpected end of binary stream");
  return value;
}

inline double get_f32(std::istream& in) { return static_cast<double>(get<float>(in)); }

inline void expect_magic(std::istream& in, std::string_view magic) {
  char buf[4] = {};
  in.read(buf, 4);
  if (!in || std::string_view(buf, 4) != magic) {
    throw Error(Errc::parse_failure, "bad magic, expected " + std::string(magic));
  }
}

}  // namespace simsr::binio
