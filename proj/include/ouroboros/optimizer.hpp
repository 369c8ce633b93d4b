#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ouroboros/packet.hpp"

namespace ouro {

using ParamRefs = std::vector<Tensor*>;

enum class OptimizerKind { sgd, adam };

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  ParamList m;
  ParamList v;
  bool initialized() const { return !m.empty(); }
};

// w <- w - lr * g for every tensor of a group.
void sgd_update(const ParamRefs& weights, const ParamList& grads, double lr);

// One Adam step on a group. `step` is the global step t; bias correction
// uses t + 1. Zero gradients are folded into the moments like any other.
void adam_update(AdamMoments& moments, const ParamRefs& weights, const ParamList& grads, double lr,
                 std::int64_t step, const AdamParams& params);

// Optimizer state partitioned by parameter group: groups 0..K-1 are the
// module groups, group K is the tied vocabulary matrix. Each group is owned
// by exactly one worker, so groups may be updated concurrently.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::size_t groups, AdamParams params = {});

  OptimizerKind kind() const { return kind_; }
  const AdamParams& adam_params() const { return params_; }
  std::size_t group_count() const { return moments_.size(); }
  AdamMoments& moments(std::size_t group) { return moments_.at(group); }
  const AdamMoments& moments(std::size_t group) const { return moments_.at(group); }

  void apply_group(std::size_t group, const ParamRefs& weights, const ParamList& grads, double lr,
                   std::int64_t step);

 private:
  OptimizerKind kind_;
  AdamParams params_;
  std::vector<AdamMoments> moments_;
};

// Packet-level updates: module k gets packet.modules[k], the shared matrix
// gets packet.embedding. Because V has one storage, V_i and V_o stay tied.
void sgd_apply(std::span<const ParamRefs> modules, Tensor& vocab_matrix,
               const GradientPacket& packet, double lr);
void adam_apply(Optimizer& state, std::span<const ParamRefs> modules, Tensor& vocab_matrix,
                const GradientPacket& packet, double lr);

}  // namespace ouro
