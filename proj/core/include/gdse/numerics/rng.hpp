#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace gdse {

// Deterministic generator: mt19937_64 bits, uniforms from the top 53 bits,
// Gaussians by the Box-Muller transform (pairs, second value cached). The
// standard library distributions are avoided because their output is
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  std::vector<double> normal_vector(std::size_t n);

  // Independent child stream; the derivation depends only on (seed, stream).
  Rng fork(std::uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gdse
