#pragma once

#include <cstdint>
#include <random>

namespace collapse {

/// SplitMix64 finalizer; used to derive independent engine seeds.
std::uint64_t splitmix64(std::uint64_t value) noexcept;

/// Reproducible random stream identified by (seed, stream).
///
/// Parallel sampling assigns one stream per fixed-size block of draws, so the
/// sequence of variates depends only on (seed, block) and never on how blocks
/// are distributed over worker threads.
class Rng {
  public:
    Rng(std::uint64_t seed, std::uint64_t stream);

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace collapse
