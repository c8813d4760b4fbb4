#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <utility>

namespace bmatree {

// splitmix64 finalizer. Used to derive independent seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed for work item `index` (fold, repeat, ...) under `master`. Depends only
// on (master, index), so adding items never perturbs existing ones.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return mix_seed(mix_seed(master) ^ mix_seed(index + 1));
}

// Portable random source: std::mt19937_64 (whose output sequence the standard
// fixes) with hand-written transforms, because the std distributions are
// implementation-defined and would break cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on {0, ..., n-1}; n must be positive. Rejection sampling, no bias.
  std::size_t uniform_index(std::size_t n) {
    const std::uint64_t range = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % range);
    std::uint64_t draw;
    do {
      draw = engine_();
    } while (draw >= limit);
    return static_cast<std::size_t>(draw % range);
  }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto count = static_cast<std::size_t>(last - first);
    for (std::size_t i = count; i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a, 64 bit, rendered as 16 hex digits. Content digests for provenance.
inline std::uint64_t fnv1a(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex_digest(std::string_view bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::uint64_t h = fnv1a(bytes);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[h & 0xF];
    h >>= 4;
  }
  return out;
}

}  // namespace bmatree
