// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "octsr/error.hpp"

namespace octsr::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written assuming a little-endian host");

template <typename T>
  requires std::is_arithmetic_v<T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
  requires std::is_arithmetic_v<T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("unexpected end of file");
  return v;
}

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void get_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is || static_cast<std::size_t>(is.gcount()) != n)
    throw FormatError("unexpected end of file");
}

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
  char buf[4];
  get_bytes(is, buf, 4);
  if (std::memcmp(buf, magic, 4) != 0)
    throw FormatError(std::string("bad magic, expected ") + magic);
}

}  // namespace octsr::binio
