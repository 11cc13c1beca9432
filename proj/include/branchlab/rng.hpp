#pragma once

#include <cstdint>

namespace branchlab {

/// xoshiro256** seeded through SplitMix64. Integer output and the Gaussian
/// transform below are fully specified, so streams are reproducible across
/// compilers and standard libraries (unlike std::normal_distribution).
class Xoshiro256 {
 public:
  /// Independent stream `stream` of the generator family `seed`.
  Xoshiro256(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next();
  /// Uniform in (0, 1].
  double uniform_open0();
  /// Standard normal via Box-Muller; caches the second variate.
  double normal();

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace branchlab
