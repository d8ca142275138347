// Seeded random streams with named substream derivation.
//
// Every stochastic component takes an explicit RngStream; there is no global
// generator. A trial derives one substream per randomness source (aug1, aug2,
// init, probe, ...) from its base seed, so changing the configuration of one
// source never perturbs the draws of another.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gcl {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Seed of the named child stream: RngStream(derive_seed(s, n)) draws the
/// same values as RngStream(s).substream(n). For seeding components that
/// take a raw seed instead of a stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  return detail::splitmix64(seed) ^ detail::fnv1a(name);
}

/// Deterministic pseudo-random stream. Copyable; a copy replays the
/// remainder of the stream independently of the original.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed)
      : base_(detail::splitmix64(seed)), engine_(detail::splitmix64(seed)) {}

  /// Derives an independent child stream identified by name.
  RngStream substream(std::string_view name) const {
    return RngStream(base_ ^ detail::fnv1a(name));
  }

  /// Derives a child stream indexed by an integer (e.g. per-split, per-epoch).
  RngStream substream(std::string_view name, std::uint64_t index) const {
    return RngStream((base_ ^ detail::fnv1a(name)) + 0x9e3779b97f4a7c15ULL * (index + 1));
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }
  /// Uniform integer in [0, n).
  std::int64_t uniform_int(std::int64_t n) {
    return std::uniform_int_distribution<std::int64_t>(0, n - 1)(engine_);
  }
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  std::int64_t binomial(std::int64_t n, double p) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    return std::binomial_distribution<std::int64_t>(n, p)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t base_;
  std::mt19937_64 engine_;
};

}  // namespace gcl
