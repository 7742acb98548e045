#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace sf {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seed for a sub-stream identified by (seed, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Seed for a sub-stream identified by (seed, string key).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

/// Deterministic random source. Draws are computed from raw mt19937_64
/// output with fixed formulas so sequences are identical across standard
/// library implementations (std distributions are not).
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi] inclusive, rejection sampled.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal via Box-Muller (no cached second value).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  std::string state() const;
  void restore(const std::string &state);

  std::mt19937_64 &engine() { return engine_; }

private:
  std::mt19937_64 engine_;
};

} // namespace sf
