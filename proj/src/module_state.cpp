#include "ouroboros/module_state.hpp"

#include <string>

#include "ouroboros/model.hpp"

namespace ouro {

std::uint64_t weights_checksum(const std::vector<Layer>& layers, const Tensor& vocab_matrix) {
  std::uint64_t h = vocab_matrix.empty() ? 0 : checksum(vocab_matrix);
  for (const auto& layer : layers)
    for (const auto& p : layer.params) h = h * 0x100000001B3ULL ^ checksum(p);
  return h;
}

ModuleState::ModuleState(std::size_t index, std::size_t module_count, std::size_t first_layer,
                         std::vector<Layer> layers, ModelDims dims)
    : index_(index),
      module_count_(module_count),
      first_layer_(first_layer),
      layers_(std::move(layers)),
      dims_(dims) {
  if (index_ >= module_count_) throw std::invalid_argument("module index out of range");
  if (layers_.empty()) throw std::invalid_argument("module must own at least one layer");
}

std::vector<Tensor*> ModuleState::param_refs() {
  std::vector<Tensor*> refs;
  for (auto& layer : layers_)
    for (auto& p : layer.params) refs.push_back(&p);
  return refs;
}

std::size_t ModuleState::param_tensor_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.params.size();
  return n;
}

std::size_t ModuleState::stored_activation_bytes() const {
  std::size_t bytes = 0;
  for (const auto& s : slots_) {
    bytes += s.input.size() * sizeof(double);
    bytes += (s.batch.tokens.size() + s.batch.targets.size()) * sizeof(int);
  }
  return bytes;
}

namespace {

struct GroupForward {
  Tensor output;
  std::vector<LayerTape> tapes;
};

GroupForward run_group(const ModuleState& m, const std::vector<Layer>& layers,
                       const Tensor& vocab_matrix, const Tensor* input, const BatchSample& batch,
                       std::int64_t step, std::uint64_t dropout_seed, bool train, bool keep_tapes,
                       bool keep_activations) {
  GroupForward g;
  Tensor h;
  const Tensor* in = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::size_t global = m.first_layer() + i;
    LayerForward f = layer_forward(layers[i], vocab_matrix, m.dims(), in, batch,
                                   dropout_stream(dropout_seed, step, global), train,
                                   keep_activations);
    h = std::move(f.output);
    in = &h;
    if (keep_tapes) g.tapes.push_back(std::move(f.tape));
  }
  g.output = std::move(h);
  return g;
}

ModuleBackward backward_through(const std::vector<LayerTape>& tapes,
                                const std::vector<Layer>& layers, const Tensor& vocab_matrix,
                                const ModelDims& dims, const Tensor& grad_out,
                                std::int64_t sample_step) {
  ModuleBackward out;
  out.sample_step = sample_step;
  std::vector<ParamList> per_layer(layers.size());
  Tensor grad = grad_out;
  for (std::size_t i = layers.size(); i-- > 0;) {
    LayerGradients lg = layer_backward(tapes[i], layers[i], vocab_matrix, dims, grad);
    per_layer[i] = std::move(lg.weights);
    if (layers[i].kind == LayerKind::head) out.output_projection_grad = std::move(lg.embedding);
    if (layers[i].kind == LayerKind::embedding) out.input_embedding_grad = std::move(lg.embedding);
    grad = std::move(lg.input);
  }
  for (auto& pl : per_layer)
    for (auto& t : pl) out.weight_grads.push_back(std::move(t));
  out.grad_input = std::move(grad);
  return out;
}

const Tensor* slot_input(const ModuleState& m, const StaleSlot& slot) {
  return m.is_first() ? nullptr : &slot.input;
}

}  // namespace

Tensor ModuleState::forward(const Tensor* input, const BatchSample& batch, std::int64_t step,
                            std::int64_t sample_id, const Tensor& vocab_matrix,
                            std::uint64_t dropout_seed, bool train) {
  if (slots_.size() >= capacity() || snapshots_.size() >= capacity()) {
    throw ScheduleViolation("module " + std::to_string(index_) + ": stale-slot queue overflow at step " +
                            std::to_string(step));
  }
  if (!is_first() && !input) throw DimensionError("module forward: missing input");

  WeightSnapshot snap;
  snap.step = step;
  snap.layers = layers_;
  if (touches_vocab()) snap.vocab_matrix = vocab_matrix;
  snap.checksum = weights_checksum(snap.layers, snap.vocab_matrix);

  GroupForward g = run_group(*this, layers_, vocab_matrix, input, batch, step, dropout_seed, train,
                             false, false);

  StaleSlot slot;
  slot.step = step;
  slot.sample_id = sample_id;
  if (!is_first()) slot.input = *input;
  if (touches_vocab()) {
    slot.batch = batch;
  } else {
    slot.batch.batch = batch.batch;
    slot.batch.seq = batch.seq;
  }
  slot.dropout_seed = dropout_seed;
  slot.output_checksum = checksum(g.output);

  slots_.push_back(std::move(slot));
  snapshots_.push_back(std::move(snap));
  peak_bytes_ = std::max(peak_bytes_, stored_activation_bytes());
  return std::move(g.output);
}

ModuleBackward ModuleState::backward(std::int64_t t, const Tensor& grad_out,
                                     const Tensor& current_vocab, StaleWeights mode, bool train) {
  const std::int64_t s = t - delay();
  if (s < 0) throw ScheduleViolation("module " + std::to_string(index_) + ": no backward due at step " + std::to_string(t));
  if (slots_.empty() || slots_.front().step != s) {
    throw ScheduleViolation("module " + std::to_string(index_) + ": stale-slot underflow, expected sample step " +
                            std::to_string(s));
  }
  if (snapshots_.empty() || snapshots_.front().step != s) {
    throw ScheduleViolation("module " + std::to_string(index_) + ": missing weight snapshot for step " +
                            std::to_string(s));
  }
  StaleSlot slot = std::move(slots_.front());
  slots_.pop_front();
  WeightSnapshot snap = std::move(snapshots_.front());
  snapshots_.pop_front();

  const Tensor grad_one({1}, {1.0});
  const Tensor& g = is_last() ? grad_one : grad_out;
  if (mode == StaleWeights::snapshot) {
    if (weights_checksum(snap.layers, snap.vocab_matrix) != snap.checksum) {
      throw ReplayMismatch("module " + std::to_string(index_) + ": snapshot checksum changed");
    }
    const Tensor& vocab = touches_vocab() ? snap.vocab_matrix : current_vocab;
    return module_recompute_backward(*this, slot, g, snap.layers, vocab, train, true);
  }
  return module_recompute_backward(*this, slot, g, layers_, current_vocab, train, false);
}

ModuleBackward module_recompute_backward(const ModuleState& module, const StaleSlot& slot,
                                         const Tensor& grad_out, const std::vector<Layer>& layers,
                                         const Tensor& vocab_matrix, bool train,
                                         bool check_replay) {
  GroupForward g = run_group(module, layers, vocab_matrix, slot_input(module, slot), slot.batch,
                             slot.step, slot.dropout_seed, train, true, false);
  if (check_replay && checksum(g.output) != slot.output_checksum) {
    throw ReplayMismatch("module " + std::to_string(module.index()) +
                         ": recomputed output differs from the original forward for step " +
                         std::to_string(slot.step));
  }
  return backward_through(g.tapes, layers, vocab_matrix, module.dims(), grad_out, slot.step);
}

ModuleBackward module_store_all_backward(const ModuleState& module, const StaleSlot& slot,
                                         const Tensor& grad_out, const std::vector<Layer>& layers,
                                         const Tensor& vocab_matrix, bool train) {
  GroupForward g = run_group(module, layers, vocab_matrix, slot_input(module, slot), slot.batch,
                             slot.step, slot.dropout_seed, train, true, true);
  return backward_through(g.tapes, layers, vocab_matrix, module.dims(), grad_out, slot.step);
}

}  // namespace ouro
