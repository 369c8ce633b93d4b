#include "ouroboros/rng.hpp"

namespace ouro {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t SeededRng::bits_at(std::uint64_t seed, std::uint64_t position) {
  return finalize(seed + (position + 1) * kGolden);
}

double SeededRng::uniform_at(std::uint64_t seed, std::uint64_t position) {
  return static_cast<double>(bits_at(seed, position) >> 11) * 0x1.0p-53;
}

std::uint64_t SeededRng::next_below(std::uint64_t bound) {
  // Rejection sampling keeps the result unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  for (;;) {
    const std::uint64_t r = next_bits();
    if (r < limit) return r % bound;
  }
}

Tensor rng_uniform(SeededRng& rng, const Shape& shape) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.next_uniform();
  return t;
}

Tensor rng_symmetric(SeededRng& rng, const Shape& shape, double bound) {
  Tensor t(shape);
  for (double& v : t.data()) v = (2.0 * rng.next_uniform() - 1.0) * bound;
  return t;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t label) {
  return finalize(finalize(base ^ kGolden) + label * 0xD1B54A32D192ED03ULL);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(base, a), b);
}

}  // namespace ouro
