#pragma once

#include <cstdint>
#include <random>

namespace ofn {

/// Seeded generator used everywhere randomness is needed.
///
/// The engine is std::mt19937_64 (bit-exact by the standard); the real-valued
/// transforms are done here rather than with std distributions, whose output
/// differs between standard library implementations. Golden values in the
/// tests rely on this.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t index(std::uint64_t n);

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  /// Derive an independent child stream, e.g. one per subsystem of a run.
  Rng split(std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

/// SplitMix64 finalizer, used to turn (seed, stream) pairs into seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace ofn
