#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "topokd/error.hpp"

namespace topokd::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
inline T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

/// Little-endian primitive writer over an ostream.
class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void magic(std::string_view m) { os_.write(m.data(), static_cast<std::streamsize>(m.size())); }

  template <class T>
  void put(T v) {
    v = to_little(v);
    os_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }

  void f32(double v) { put(static_cast<float>(v)); }

  void str(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  void check() const {
    if (!os_) throw FormatError("write failed");
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  void expect_magic(std::string_view m) {
    std::string got(m.size(), '\0');
    is_.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!is_ || got != m) throw FormatError("bad magic, expected '" + std::string(m) + "'");
  }

  template <class T>
  T get() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is_) throw FormatError("truncated file");
    return to_little(v);
  }

  double f32() { return static_cast<double>(get<float>()); }

  std::string str() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    is_.read(s.data(), n);
    if (!is_) throw FormatError("truncated string");
    return s;
  }

  void expect_end() {
    if (is_.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes");
  }

 private:
  std::istream& is_;
};

}  // namespace topokd::io
