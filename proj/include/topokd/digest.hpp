#pragma once

#include <cstdint>
#include <cstring>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>

namespace topokd {

/// Incremental 64-bit FNV-1a. Used for config digests, checkpoint digests and
/// cache keys; not a cryptographic hash.
class Digest {
 public:
  Digest& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  Digest& text(std::string_view s) {
    const auto n = static_cast<std::uint64_t>(s.size());
    bytes(&n, sizeof n);
    return bytes(s.data(), s.size());
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  Digest& value(T v) {
    return bytes(&v, sizeof v);
  }

  Digest& values(std::span<const double> v) { return bytes(v.data(), v.size_bytes()); }

  std::uint64_t get() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string hex_digest(std::uint64_t d) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << d;
  return os.str();
}

}  // namespace topokd
