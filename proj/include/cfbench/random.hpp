#ifndef CFBENCH_RANDOM_HPP_
#define CFBENCH_RANDOM_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace cfbench {

/// Portable random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard distributions are not (their algorithms are left to
/// the library vendor), so every variate here is derived from raw engine
/// output with an algorithm written out in random.cpp. Two machines given the
/// same seed therefore draw the same splits and the same EM initializations.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  /// Uniform real in [0, 1) with 53 random bits.
  double uniform01();

  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal (Marsaglia polar method).
  double normal();

  /// Gamma(shape, 1) (Marsaglia-Tsang, with the u^(1/shape) boost below 1).
  double gamma(double shape);

  /// One draw from Dirichlet(alpha).
  std::vector<double> dirichlet(std::span<const double> alpha);

  /// Categorical draw from unnormalized nonnegative weights.
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

/// Derives an independent stream seed from a base seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace cfbench

#endif  // CFBENCH_RANDOM_HPP_
