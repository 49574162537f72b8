#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace railab {

// Incremental FNV-1a (64-bit). Used for state hashes, replay integrity and
// config fingerprints; stability across runs is the only requirement.
class Fnv1a {
 public:
  Fnv1a() = default;

  Fnv1a& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  Fnv1a& u8(std::uint8_t v) { return bytes(&v, 1); }
  Fnv1a& u32(std::uint32_t v) { return bytes(&v, 4); }
  Fnv1a& u64(std::uint64_t v) { return bytes(&v, 8); }
  Fnv1a& i32(std::int32_t v) { return bytes(&v, 4); }

  Fnv1a& f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    return u64(bits);
  }

  Fnv1a& str(std::string_view s) { return bytes(s.data(), s.size()); }

  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace railab
