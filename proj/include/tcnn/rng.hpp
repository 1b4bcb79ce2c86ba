#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tcnn {

std::uint64_t splitmix_seed(std::uint64_t seed);

/// Deterministic random stream. Every consumer derives its own stream from
/// the run seed plus a name, so adding a consumer never perturbs another.
/// Distributions are implemented here rather than with <random>'s
/// distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_mix_(splitmix_seed(seed)) {}
  Rng(std::uint64_t seed, std::string_view stream);

  /// A child stream, independent of this one's current position.
  Rng substream(std::string_view name) const { return Rng(seed_mix_, name); }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  /// `count` distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_mix_ = 0;
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view name);

}  // namespace tcnn
