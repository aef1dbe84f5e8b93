#include "scorefilter/random.hpp"

#include <algorithm>
#include <numeric>

namespace scorefilter {

EpochShuffler::EpochShuffler(std::size_t n, std::uint64_t seed)
    : rng_(seed), order_(n) {}

const std::vector<std::size_t>& EpochShuffler::next() {
  // Reset before shuffling so epoch k depends only on the seed and k.
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  return order_;
}

}  // namespace scorefilter
