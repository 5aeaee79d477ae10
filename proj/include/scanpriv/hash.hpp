#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

namespace scanpriv {

// 64-bit FNV-1a. Stable across platforms for identical byte input; used for
// config hashes, artifact headers and parameter fingerprints.
class Hasher {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  Hasher& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= kPrime;
    }
    return *this;
  }

  Hasher& text(std::string_view s) {
    bytes(s.data(), s.size());
    // Terminator keeps ("ab","c") distinct from ("a","bc").
    const unsigned char zero = 0;
    return bytes(&zero, 1);
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  Hasher& value(T v) {
    // Little-endian hosts only; the build targets x86-64 and aarch64.
    return bytes(&v, sizeof v);
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  Hasher& values(std::span<const T> v) {
    return bytes(v.data(), v.size_bytes());
  }

  std::uint64_t digest() const { return state_; }
  std::string hex() const { return to_hex(state_); }

  static std::string to_hex(std::uint64_t v) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
      v >>= 4;
    }
    return out;
  }

 private:
  std::uint64_t state_ = kOffset;
};

inline std::uint64_t hash_text(std::string_view s) {
  return Hasher().text(s).digest();
}

}  // namespace scanpriv
