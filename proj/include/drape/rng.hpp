#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "drape/types.hpp"

namespace drape {

// Deterministic, platform-independent PRNG (xoshiro256** seeded via
// splitmix64). std::<distribution> outputs are implementation-defined,
// which would break the bit-reproducibility contract, so everything is
// generated from these primitives.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // [0, 1), 53-bit resolution
  double uniform();
  // (0, 1]
  double uniform_pos();
  // standard normal, Box-Muller with cached spare
  double normal();
  // uniform integer in [0, n)
  int below(int n);

 private:
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent substream seed from a base seed and a salt.
std::uint64_t substream(std::uint64_t base, std::uint64_t salt);

Mat randn(Rng& rng, Index rows, Index cols, Scalar stddev = 1.0);

template <typename T>
void shuffle(Rng& rng, std::vector<T>& items) {
  for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
    const int j = rng.below(i + 1);
    std::swap(items[static_cast<std::size_t>(i)], items[static_cast<std::size_t>(j)]);
  }
}

}  // namespace drape
