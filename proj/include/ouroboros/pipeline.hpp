#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ouroboros/lr_schedule.hpp"
#include "ouroboros/model.hpp"
#include "ouroboros/module_state.hpp"
#include "ouroboros/optimizer.hpp"
#include "ouroboros/packet.hpp"
#include "ouroboros/partition.hpp"
#include "ouroboros/trace.hpp"

namespace ouro {

// Convention for combining the two gradients of the tied matrix:
// half_avg = (dV_o + dV_i) / 2, sum = dV_o + dV_i.
enum class TiedGrad { half_avg, sum };

// g_V^t from the fresh output-projection gradient and the input-embedding
// gradient of sample t-K+1. Zero while t-K+1 < 0, in which case
// `grad_vi_stale` must be null; otherwise it must be present.
Tensor embedding_gradient(std::int64_t t, std::size_t modules, const Tensor& grad_vo_fresh,
                          const Tensor* grad_vi_stale, TiedGrad mode = TiedGrad::half_avg);

struct EngineOptions {
  std::size_t modules = 1;
  Balance balance = Balance::even;
  std::vector<double> layer_costs;  // for Balance::by_cost
  TiedGrad tied_grad = TiedGrad::half_avg;
  StaleWeights stale_weights = StaleWeights::snapshot;
  std::uint64_t dropout_seed = 0;
  bool train = true;
  CostModel costs;  // empty: derived from the partition
};

struct StepRecord {
  GradientPacket packet;
  double loss = 0.0;
  double logical = 0.0;  // logical-clock duration of the step
  double wall_ms = 0.0;
};

// The partitioned model plus the delayed-gradient schedule. Every step:
//  (a) sample t is relayed forward through modules 0..K-1 at current weights,
//      each module snapshotting its weights and storing only its input;
//  (b) module k back-propagates sample t-K+1+k at that sample's snapshot,
//      using the boundary gradient module k+1 produced one step earlier;
//  (c) the tied matrix gets the mixed gradient of sample t (output side) and
//      sample t-K+1 (input side);
//  (d) all groups are updated after every gradient of the step exists.
class PipelineEngine {
 public:
  PipelineEngine(Model model, EngineOptions options);

  const ModulePartition& partition() const { return partition_; }
  const EngineOptions& options() const { return options_; }
  const CostModel& costs() const { return options_.costs; }
  std::size_t module_count() const { return modules_.size(); }
  std::vector<ModuleState>& modules() { return modules_; }
  const std::vector<ModuleState>& modules() const { return modules_; }

  // V_i and V_o are the same storage.
  Tensor& vocab_matrix() { return vocab_; }
  const Tensor& input_embedding() const { return vocab_; }
  const Tensor& output_projection() const { return vocab_; }

  // Assembled copy of the current weights as an un-partitioned model.
  Model model() const;

  // (a)-(c) for step t without touching weights. `loss` receives the loss of
  // sample t at the current weights.
  GradientPacket compute(std::int64_t t, const BatchSample& batch, double& loss);
  // (d): group k gets packet.modules[k], group K the tied matrix.
  void apply(const GradientPacket& packet, Optimizer& optimizer, double lr);
  StepRecord step(std::int64_t t, const BatchSample& batch, Optimizer& optimizer, double lr);

  ScheduleTrace& trace() { return trace_; }
  const ScheduleTrace& trace() const { return trace_; }
  double logical_clock() const { return clock_; }
  void set_logical_clock(double clock) { clock_ = clock; }
  double advance_clock(std::int64_t t, std::span<const std::int64_t> samples);

 private:
  EngineOptions options_;
  ModulePartition partition_;
  ModelDims dims_;
  Tensor vocab_;
  std::vector<ModuleState> modules_;
  ScheduleTrace trace_;
  double clock_ = 0.0;
};

ParamRefs model_param_refs(Model& model);

struct SequentialStep {
  GradientPacket packet;  // single module holding every layer
  double loss = 0.0;
};

// Plain back-propagation of sample t at the current weights, no update.
SequentialStep sequential_gradient(std::int64_t t, const BatchSample& batch, const Model& model,
                                   TiedGrad tied_grad, std::uint64_t dropout_seed, bool train);

// Plain back-propagation then an update: optimizer group 0 holds all layers,
// group 1 the tied matrix.
SequentialStep sequential_step(std::int64_t t, const BatchSample& batch, Model& model,
                               Optimizer& optimizer, double lr, TiedGrad tied_grad,
                               std::uint64_t dropout_seed, bool train);

using BatchSource = std::function<BatchSample(std::int64_t)>;
using StepObserver = std::function<void(const StepRecord&)>;

// Single worker, fixed iteration order: steps [first, first + count).
void run_reference(PipelineEngine& engine, const BatchSource& batches, Optimizer& optimizer,
                   const LrSchedule& schedule, std::int64_t first, std::int64_t count,
                   const StepObserver& observer = {});

}  // namespace ouro
