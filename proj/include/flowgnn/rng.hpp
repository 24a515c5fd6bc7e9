#pragma once

#include <cstdint>
#include <string_view>

namespace flowgnn::rng {

/// SplitMix64 finalizer. Bijective on 64-bit words, good avalanche.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Combines a key word into a seed. Order-sensitive.
inline std::uint64_t combine(std::uint64_t seed, std::uint64_t word) {
  return mix64(seed ^ (word + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2)));
}

/// Derives an independent module seed from a master seed and a tag,
/// e.g. derive(seed, "split") and derive(seed, "padding") do not collide.
inline std::uint64_t derive(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : tag) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ull;
  return combine(seed, h);
}

/// Counter-based generator: the stream is a pure function of the key, so
/// sampling results do not depend on thread scheduling. Keys are built by
/// chaining combine() over (epoch, batch, layer, node) or similar tuples.
class Pcg {
public:
  explicit Pcg(std::uint64_t key) : state_(mix64(key)) {}

  std::uint64_t next_u64() {
    state_ = state_ * 6364136223846793005ull + 1442695040888963407ull;
    return mix64(state_);
  }

  /// Uniform integer in [0, bound) without modulo bias (Lemire reduction).
  std::uint64_t next_below(std::uint64_t bound) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
    std::uint64_t lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      std::uint64_t threshold = (-bound) % bound;
      while (lo < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * bound;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Uniform double in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double next_double(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

private:
  std::uint64_t state_;
};

}  // namespace flowgnn::rng
