#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace scorefilter {

using Rng = std::mt19937_64;

/// Yields one seeded permutation of {0..n-1} per call. Stage-1 training and
/// plain training draw batches from the same schedule, so identical seeds
/// give identical batch order.
class EpochShuffler {
 public:
  EpochShuffler(std::size_t n, std::uint64_t seed);
  const std::vector<std::size_t>& next();

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
};

}  // namespace scorefilter
