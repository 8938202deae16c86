#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace crt {

/// Counter-based, splittable 64-bit generator.
///
/// Output k of a stream with key K is splitmix64(K + (k+1) * golden), so a
/// stream is fully determined by its key and position. Child streams get
/// keys hashed from (parent key, purpose tag, index); sibling streams are
/// statistically independent and never depend on the order in which they
/// are created or consumed. Satisfies UniformRandomBitGenerator.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t key) noexcept : key_(mix(key)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    counter_ += kGolden;
    return mix(key_ + counter_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  Stream derive(std::string_view purpose, std::uint64_t index = 0) const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : purpose) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    return Stream(mix(key_ ^ mix(h)) + mix(index + kGolden));
  }

  Stream derive(std::uint64_t index) const noexcept { return derive("", index); }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t position() const noexcept { return counter_ / kGolden; }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace crt
