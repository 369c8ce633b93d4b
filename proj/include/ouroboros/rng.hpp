#pragma once

#include <cstdint>

#include "ouroboros/tensor.hpp"

namespace ouro {

// Counter-based generator: the value at stream position p is a pure function
// of (seed, p), so any draw can be regenerated without replaying the stream.
// Output for position p is the p-th SplitMix64 output for `seed`.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0, std::uint64_t position = 0)
      : seed_(seed), position_(position) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }
  void seek(std::uint64_t position) { position_ = position; }

  static std::uint64_t bits_at(std::uint64_t seed, std::uint64_t position);
  static double uniform_at(std::uint64_t seed, std::uint64_t position);

  std::uint64_t next_bits() { return bits_at(seed_, position_++); }
  // Uniform double in [0, 1) with 53 random bits.
  double next_uniform() { return uniform_at(seed_, position_++); }
  // Uniform integer in [0, bound).
  std::uint64_t next_below(std::uint64_t bound);

 private:
  std::uint64_t seed_;
  std::uint64_t position_;
};

// Fills a tensor of `shape` with uniform [0,1) draws and advances the stream
// by element_count(shape).
Tensor rng_uniform(SeededRng& rng, const Shape& shape);
// Uniform in [-bound, bound).
Tensor rng_symmetric(SeededRng& rng, const Shape& shape, double bound);

// Hash-combines a base seed with stream labels (step, layer, ...).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t label);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b);

}  // namespace ouro
