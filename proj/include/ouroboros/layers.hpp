#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ouroboros/rng.hpp"
#include "ouroboros/tensor.hpp"

namespace ouro {

struct ModelDims {
  std::size_t vocab = 256;
  std::size_t dim = 64;
  std::size_t ffn_dim = 256;
  std::size_t seq_len = 64;
  std::size_t blocks = 8;
  double dropout = 0.1;
  double ln_eps = 1e-5;

  // Embedding + blocks + head.
  std::size_t layer_count() const { return blocks + 2; }
};

enum class LayerKind { embedding, block, head };
const char* to_string(LayerKind kind);

using ParamList = std::vector<Tensor>;

struct Layer {
  LayerKind kind = LayerKind::block;
  ParamList params;
};

// Parameter slots. The tied vocabulary matrix V is not part of any layer's
// ParamList: it is passed alongside to the embedding and head layers.
namespace embedding_param {
enum : std::size_t { positions, count };
}
namespace block_param {
enum : std::size_t { ln1_gain, ln1_bias, wq, wk, wv, wo, ln2_gain, ln2_bias, w1, b1, w2, b2, count };
}
namespace head_param {
enum : std::size_t { ln_gain, ln_bias, count };
}

// Token ids and next-token targets, row-major [batch][seq].
struct BatchSample {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<int> tokens;
  std::vector<int> targets;

  // Throws std::out_of_range when an id is outside [0, vocab).
  void validate(std::size_t vocab) const;
};

struct DropoutStream {
  std::uint64_t seed = 0;
  std::uint64_t position = 0;
};

// Inverted-dropout mask: 1/keep where the draw at (seed, position + i) is
// below keep, else 0. Fully determined by the stream.
Tensor dropout_mask(const DropoutStream& stream, const Shape& shape, double keep);

struct BlockCache {
  Tensor x, ln1_hat, ln1_rstd, a, q, k, v, probs, attn, mask1;
  Tensor x1, ln2_hat, ln2_rstd, c, f1, r, mask2;
};

struct HeadCache {
  Tensor ln_hat, ln_rstd, features;
};

// Everything needed to replay a layer's forward exactly: the stored input,
// the dropout stream, and the mode. When built with keep_activations the
// inner activations are cached too and backward skips recomputation.
struct LayerTape {
  LayerKind kind = LayerKind::block;
  std::size_t batch = 0;
  std::size_t seq = 0;
  Tensor input;
  std::vector<int> tokens;
  std::vector<int> targets;
  DropoutStream dropout;
  bool train = false;
  std::shared_ptr<const BlockCache> block_cache;
  std::shared_ptr<const HeadCache> head_cache;
};

struct LayerForward {
  Tensor output;  // [B,S,D]; the head emits the mean loss as a [1] tensor
  LayerTape tape;
};

struct LayerGradients {
  Tensor input;      // absent for the embedding layer
  ParamList weights;
  Tensor embedding;  // dV_i from the embedding layer, dV_o from the head
};

LayerForward layer_forward(const Layer& layer, const Tensor& vocab_matrix, const ModelDims& dims,
                           const Tensor* input, const BatchSample& batch, DropoutStream dropout,
                           bool train, bool keep_activations = false);

LayerGradients layer_backward(const LayerTape& tape, const Layer& layer,
                              const Tensor& vocab_matrix, const ModelDims& dims,
                              const Tensor& grad_out);

// Scatter-add of grad_out rows [B,S,D] into the token rows of a [vocab,D] zero matrix.
Tensor embedding_input_gradient(const LayerTape& tape, const Tensor& grad_out, std::size_t vocab);

struct HeadLoss {
  double loss = 0.0;
  Tensor grad_input;       // d loss / d features, [N,D]
  Tensor grad_projection;  // d loss / d V_o, [vocab,D]
};

// Projection onto the tied vocabulary matrix followed by mean token-level
// softmax cross-entropy. `grad_scale` multiplies both gradients.
HeadLoss loss_and_head_backward(const Tensor& features, const Tensor& projection,
                                std::span<const int> targets, double grad_scale = 1.0);
double softmax_cross_entropy(const Tensor& logits, std::span<const int> targets);

// y = x W with x [N,in], W [in,out].
struct LinearGradients {
  Tensor input;
  Tensor weight;
};
Tensor linear_forward(const Tensor& x, const Tensor& weight);
LinearGradients linear_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out);

double gelu(double x);
double gelu_derivative(double x);

Layer init_layer(LayerKind kind, const ModelDims& dims, SeededRng& rng);
Tensor init_vocab_matrix(const ModelDims& dims, SeededRng& rng);
ParamList zeros_like(const ParamList& params);

}  // namespace ouro
