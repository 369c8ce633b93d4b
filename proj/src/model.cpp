#include "ouroboros/model.hpp"

namespace ouro {

Model init_model(const ModelDims& dims, std::uint64_t seed) {
  Model m;
  m.dims = dims;
  SeededRng rng(derive_seed(seed, 0x1417));
  m.vocab_matrix = init_vocab_matrix(dims, rng);
  m.layers.push_back(init_layer(LayerKind::embedding, dims, rng));
  for (std::size_t b = 0; b < dims.blocks; ++b) m.layers.push_back(init_layer(LayerKind::block, dims, rng));
  m.layers.push_back(init_layer(LayerKind::head, dims, rng));
  return m;
}

DropoutStream dropout_stream(std::uint64_t base_seed, std::int64_t step, std::size_t layer) {
  return {derive_seed(base_seed, static_cast<std::uint64_t>(step), layer), 0};
}

FullGradient full_backprop(const Model& model, const BatchSample& batch, std::uint64_t dropout_seed,
                           std::int64_t step, bool train) {
  const std::size_t L = model.layers.size();
  std::vector<LayerTape> tapes;
  tapes.reserve(L);
  Tensor h;
  for (std::size_t l = 0; l < L; ++l) {
    LayerForward f = layer_forward(model.layers[l], model.vocab_matrix, model.dims,
                                   l == 0 ? nullptr : &h, batch,
                                   dropout_stream(dropout_seed, step, l), train, true);
    h = std::move(f.output);
    tapes.push_back(std::move(f.tape));
  }
  FullGradient g;
  g.loss = h[0];
  g.layers.resize(L);
  Tensor grad = Tensor({1}, {1.0});
  for (std::size_t l = L; l-- > 0;) {
    LayerGradients lg = layer_backward(tapes[l], model.layers[l], model.vocab_matrix, model.dims, grad);
    g.layers[l] = std::move(lg.weights);
    if (model.layers[l].kind == LayerKind::head) g.output_projection = std::move(lg.embedding);
    if (model.layers[l].kind == LayerKind::embedding) g.input_embedding = std::move(lg.embedding);
    grad = std::move(lg.input);
  }
  return g;
}

double model_loss(const Model& model, const BatchSample& batch, std::uint64_t dropout_seed,
                  std::int64_t step, bool train) {
  Tensor h;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    h = layer_forward(model.layers[l], model.vocab_matrix, model.dims, l == 0 ? nullptr : &h, batch,
                      dropout_stream(dropout_seed, step, l), train)
            .output;
  }
  return h[0];
}

}  // namespace ouro
