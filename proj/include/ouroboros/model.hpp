#pragma once

#include <cstdint>
#include <vector>

#include "ouroboros/layers.hpp"

namespace ouro {

// The full (un-partitioned) network: layer 0 is the embedding, the last
// layer is the head, and `vocab_matrix` is the single tied V shared by both.
struct Model {
  ModelDims dims;
  Tensor vocab_matrix;
  std::vector<Layer> layers;
};

Model init_model(const ModelDims& dims, std::uint64_t seed);

// Dropout stream of global layer `layer` for the sample consumed at `step`.
// Every executor derives masks through this one function, which is what makes
// recomputation and the oracle replay bitwise.
DropoutStream dropout_stream(std::uint64_t base_seed, std::int64_t step, std::size_t layer);

struct FullGradient {
  double loss = 0.0;
  std::vector<ParamList> layers;
  Tensor input_embedding;    // d f / d V_i
  Tensor output_projection;  // d f / d V_o
};

// Store-all forward and backward through every layer.
FullGradient full_backprop(const Model& model, const BatchSample& batch, std::uint64_t dropout_seed,
                           std::int64_t step, bool train);

double model_loss(const Model& model, const BatchSample& batch, std::uint64_t dropout_seed,
                  std::int64_t step, bool train);

}  // namespace ouro
