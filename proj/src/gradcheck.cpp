#include "ouroboros/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "ouroboros/model.hpp"

namespace ouro {

namespace {

double rel_error(const Tensor& analytic, const Tensor& numeric) {
  const double diff = std::sqrt(squared_norm(sub(analytic, numeric)));
  const double scale = std::max(std::sqrt(squared_norm(analytic)), std::sqrt(squared_norm(numeric)));
  return scale == 0.0 ? diff : diff / scale;
}

Tensor numeric_gradient(Tensor& x, const std::function<double()>& f, double h) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double plus = f();
    x[i] = saved - h;
    const double minus = f();
    x[i] = saved;
    g[i] = (plus - minus) / (2.0 * h);
  }
  return g;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Moves gains and biases away from 1 and 0 so every path is exercised.
void perturb(ParamList& params, SeededRng& rng) {
  for (auto& p : params)
    for (double& v : p.data()) v += 0.3 * (2.0 * rng.next_uniform() - 1.0);
}

BatchSample random_batch(const ModelDims& dims, std::size_t batch, SeededRng& rng) {
  BatchSample b;
  b.batch = batch;
  b.seq = dims.seq_len;
  for (std::size_t i = 0; i < batch * dims.seq_len; ++i) {
    b.tokens.push_back(static_cast<int>(rng.next_below(dims.vocab)));
    b.targets.push_back(static_cast<int>(rng.next_below(dims.vocab)));
  }
  return b;
}

}  // namespace

double GradCheckResult::max_rel_error() const {
  double m = 0.0;
  for (const auto& t : tensors) m = std::max(m, t.rel_error);
  return m;
}

ModelDims gradcheck_dims() {
  ModelDims d;
  d.vocab = 7;
  d.dim = 6;
  d.ffn_dim = 8;
  d.seq_len = 4;
  d.blocks = 2;
  d.dropout = 0.25;
  return d;
}

GradCheckResult check_layer_gradients(LayerKind kind, const ModelDims& dims, std::uint64_t seed,
                                      double h) {
  SeededRng rng(derive_seed(seed, 0x6c61));
  const std::size_t batch = 2;
  Layer layer = init_layer(kind, dims, rng);
  perturb(layer.params, rng);
  Tensor vocab = init_vocab_matrix(dims, rng);
  const BatchSample b = random_batch(dims, batch, rng);
  Tensor input = rng_symmetric(rng, {batch, dims.seq_len, dims.dim}, 1.0);
  const DropoutStream stream{derive_seed(seed, 0xd0), 0};
  const bool has_input = kind != LayerKind::embedding;

  const auto run = [&] {
    return layer_forward(layer, vocab, dims, has_input ? &input : nullptr, b, stream, true);
  };
  LayerForward fwd = run();
  const Tensor probe = kind == LayerKind::head ? Tensor({1}, {1.0}) : rng_symmetric(rng, fwd.output.shape(), 1.0);
  const LayerGradients g = layer_backward(fwd.tape, layer, vocab, dims, probe);
  const std::function<double()> f = [&] { return dot(run().output, probe); };

  GradCheckResult result;
  result.subject = to_string(kind);
  if (has_input) result.tensors.push_back({"input", rel_error(g.input, numeric_gradient(input, f, h))});
  for (std::size_t i = 0; i < layer.params.size(); ++i) {
    result.tensors.push_back(
        {"param" + std::to_string(i), rel_error(g.weights[i], numeric_gradient(layer.params[i], f, h))});
  }
  if (kind != LayerKind::block) {
    result.tensors.push_back({"vocab", rel_error(g.embedding, numeric_gradient(vocab, f, h))});
  }
  return result;
}

GradCheckResult check_model_gradients(const ModelDims& dims, std::uint64_t seed, double h) {
  SeededRng rng(derive_seed(seed, 0x6d6f));
  Model model = init_model(dims, seed);
  for (auto& layer : model.layers) perturb(layer.params, rng);
  const BatchSample b = random_batch(dims, 2, rng);
  const std::uint64_t dropout_seed = derive_seed(seed, 0xd1);
  const FullGradient g = full_backprop(model, b, dropout_seed, 0, true);
  const std::function<double()> f = [&] { return model_loss(model, b, dropout_seed, 0, true); };

  GradCheckResult result;
  result.subject = "model";
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    for (std::size_t i = 0; i < model.layers[l].params.size(); ++i) {
      result.tensors.push_back({"layer" + std::to_string(l) + ".param" + std::to_string(i),
                                rel_error(g.layers[l][i], numeric_gradient(model.layers[l].params[i], f, h))});
    }
  }
  result.tensors.push_back({"vocab", rel_error(add(g.input_embedding, g.output_projection),
                                               numeric_gradient(model.vocab_matrix, f, h))});
  return result;
}

}  // namespace ouro
