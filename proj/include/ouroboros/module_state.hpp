#pragma once

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "ouroboros/layers.hpp"

namespace ouro {

// Which weights a delayed backward is evaluated at: the snapshot taken when
// the sample went forward, or whatever the module holds now.
enum class StaleWeights { snapshot, current };

class ScheduleViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ReplayMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pending delayed backward: only the module input is stored, never the
// inner activations.
struct StaleSlot {
  std::int64_t step = 0;
  std::int64_t sample_id = 0;
  Tensor input;       // absent for the first module (its input is tokens)
  BatchSample batch;  // tokens/targets, kept only by the first and last module
  std::uint64_t dropout_seed = 0;
  std::uint64_t output_checksum = 0;
};

struct WeightSnapshot {
  std::int64_t step = 0;
  std::vector<Layer> layers;
  Tensor vocab_matrix;  // only for modules touching V
  std::uint64_t checksum = 0;
};

struct BoundaryGradient {
  std::int64_t sample_step = 0;
  Tensor grad;
};

struct ModuleBackward {
  std::int64_t sample_step = 0;
  Tensor grad_input;              // absent for the first module
  ParamList weight_grads;         // all layers of the group, in order
  Tensor input_embedding_grad;    // first module only
  Tensor output_projection_grad;  // last module only
};

std::uint64_t weights_checksum(const std::vector<Layer>& layers, const Tensor& vocab_matrix);

// One group G(k) of the partitioned network together with the state needed to
// run its backward K-1-k steps late.
class ModuleState {
 public:
  ModuleState(std::size_t index, std::size_t module_count, std::size_t first_layer,
              std::vector<Layer> layers, ModelDims dims);

  std::size_t index() const { return index_; }
  std::size_t module_count() const { return module_count_; }
  std::size_t first_layer() const { return first_layer_; }
  bool is_first() const { return index_ == 0; }
  bool is_last() const { return index_ + 1 == module_count_; }
  bool touches_vocab() const { return is_first() || is_last(); }
  // Steps between this module's forward and backward of a sample.
  std::int64_t delay() const { return static_cast<std::int64_t>(module_count_ - 1 - index_); }
  std::size_t capacity() const { return module_count_ - index_; }
  const ModelDims& dims() const { return dims_; }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Tensor*> param_refs();
  std::size_t param_tensor_count() const;

  // Forward relay of the sample consumed at `step` at the current weights.
  // Records a weight snapshot and a stale slot, returns the module output
  // (the [1] loss for the last module).
  Tensor forward(const Tensor* input, const BatchSample& batch, std::int64_t step,
                 std::int64_t sample_id, const Tensor& vocab_matrix, std::uint64_t dropout_seed,
                 bool train);

  bool backward_due(std::int64_t t) const { return t - delay() >= 0; }

  // Pops the slot and snapshot of sample step t - delay() and runs the
  // recompute backward. `grad_out` is the boundary gradient from the next
  // module, or ignored for the last module (d loss = 1).
  ModuleBackward backward(std::int64_t t, const Tensor& grad_out, const Tensor& current_vocab,
                          StaleWeights mode, bool train);

  std::deque<StaleSlot>& slots() { return slots_; }
  const std::deque<StaleSlot>& slots() const { return slots_; }
  std::deque<WeightSnapshot>& snapshots() { return snapshots_; }
  const std::deque<WeightSnapshot>& snapshots() const { return snapshots_; }
  // Boundary gradients received from the next module, oldest first.
  std::deque<BoundaryGradient>& inbox() { return inbox_; }
  const std::deque<BoundaryGradient>& inbox() const { return inbox_; }

  std::size_t stored_activation_bytes() const;
  std::size_t peak_activation_bytes() const { return peak_bytes_; }

 private:
  std::size_t index_;
  std::size_t module_count_;
  std::size_t first_layer_;
  std::vector<Layer> layers_;
  ModelDims dims_;
  std::deque<StaleSlot> slots_;
  std::deque<WeightSnapshot> snapshots_;
  std::deque<BoundaryGradient> inbox_;
  std::size_t peak_bytes_ = 0;
};

// Replays the group forward from the slot input at the snapshot weights with
// the slot's dropout streams, then backpropagates `grad_out` through it.
// Layer inputs are recomputed; nothing from the original forward is reused.
ModuleBackward module_recompute_backward(const ModuleState& module, const StaleSlot& slot,
                                         const Tensor& grad_out, const std::vector<Layer>& layers,
                                         const Tensor& vocab_matrix, bool train,
                                         bool check_replay);

// Reference for the recompute path: one forward that caches every inner
// activation, then backward from the cache.
ModuleBackward module_store_all_backward(const ModuleState& module, const StaleSlot& slot,
                                         const Tensor& grad_out, const std::vector<Layer>& layers,
                                         const Tensor& vocab_matrix, bool train);

}  // namespace ouro
