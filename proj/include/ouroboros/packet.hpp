#pragma once

#include <cstdint>
#include <vector>

#include "ouroboros/layers.hpp"

namespace ouro {

// Everything one step applies: a gradient per module group and the mixed
// gradient of the tied vocabulary matrix.
struct GradientPacket {
  std::int64_t step = 0;
  std::vector<ParamList> modules;   // g_k^t, zero tensors while padded
  Tensor embedding;                 // g_V^t
  std::vector<std::int64_t> samples;  // sample step consumed by module k, -1 when padded
  std::int64_t embedding_stale_sample = -1;

  // Sum of squared entries over all module gradients then g_V.
  double squared_norm() const;
};

bool bitwise_equal(const GradientPacket& a, const GradientPacket& b);

}  // namespace ouro
