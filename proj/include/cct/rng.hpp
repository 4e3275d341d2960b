#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cct {

/// Derives an independent seed for a named random sub-stream, e.g.
/// derive_seed(base, "shuffle", epoch). All randomness in the library is
/// keyed this way so that a single base seed reproduces a run.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream, std::uint64_t index = 0);

/// Seeded generator with portable distribution mappings. The standard
/// <random> distributions are implementation-defined, so sampling is done
/// here directly on top of the raw 64-bit engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller, no caching).
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cct
