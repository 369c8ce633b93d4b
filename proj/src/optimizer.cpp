#include "ouroboros/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ouro {

double GradientPacket::squared_norm() const {
  double s = 0.0;
  for (const auto& group : modules)
    for (const auto& g : group) s += ouro::squared_norm(g);
  if (!embedding.empty()) s += ouro::squared_norm(embedding);
  return s;
}

bool bitwise_equal(const GradientPacket& a, const GradientPacket& b) {
  if (a.step != b.step || a.samples != b.samples || a.modules.size() != b.modules.size()) return false;
  if (a.embedding_stale_sample != b.embedding_stale_sample) return false;
  for (std::size_t k = 0; k < a.modules.size(); ++k) {
    if (a.modules[k].size() != b.modules[k].size()) return false;
    for (std::size_t i = 0; i < a.modules[k].size(); ++i)
      if (!bitwise_equal(a.modules[k][i], b.modules[k][i])) return false;
  }
  return bitwise_equal(a.embedding, b.embedding);
}

namespace {

void check_group(const ParamRefs& weights, const ParamList& grads) {
  if (weights.size() != grads.size()) {
    throw DimensionError("optimizer: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(weights.size()) + " weights");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i]->shape() != grads[i].shape()) {
      throw DimensionError("optimizer: gradient " + shape_string(grads[i].shape()) +
                           " does not match weight " + shape_string(weights[i]->shape()));
    }
  }
}

}  // namespace

void sgd_update(const ParamRefs& weights, const ParamList& grads, double lr) {
  check_group(weights, grads);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    Tensor& w = *weights[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
    w.require_finite("sgd update");
  }
}

void adam_update(AdamMoments& moments, const ParamRefs& weights, const ParamList& grads, double lr,
                 std::int64_t step, const AdamParams& p) {
  check_group(weights, grads);
  if (!moments.initialized()) {
    moments.m = zeros_like(grads);
    moments.v = zeros_like(grads);
  }
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(step + 1));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(step + 1));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    Tensor& w = *weights[i];
    const Tensor& g = grads[i];
    Tensor& m = moments.m[i];
    Tensor& v = moments.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = p.beta1 * m[j] + (1.0 - p.beta1) * g[j];
      v[j] = p.beta2 * v[j] + (1.0 - p.beta2) * (g[j] * g[j]);
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + p.eps);
    }
    w.require_finite("adam update");
  }
}

Optimizer::Optimizer(OptimizerKind kind, std::size_t groups, AdamParams params)
    : kind_(kind), params_(params), moments_(groups) {}

void Optimizer::apply_group(std::size_t group, const ParamRefs& weights, const ParamList& grads,
                            double lr, std::int64_t step) {
  if (kind_ == OptimizerKind::sgd) {
    sgd_update(weights, grads, lr);
  } else {
    adam_update(moments_.at(group), weights, grads, lr, step, params_);
  }
}

void sgd_apply(std::span<const ParamRefs> modules, Tensor& vocab_matrix,
               const GradientPacket& packet, double lr) {
  if (modules.size() != packet.modules.size()) throw DimensionError("sgd_apply: module count mismatch");
  for (std::size_t k = 0; k < modules.size(); ++k) sgd_update(modules[k], packet.modules[k], lr);
  sgd_update({&vocab_matrix}, {packet.embedding}, lr);
}

void adam_apply(Optimizer& state, std::span<const ParamRefs> modules, Tensor& vocab_matrix,
                const GradientPacket& packet, double lr) {
  if (modules.size() != packet.modules.size()) throw DimensionError("adam_apply: module count mismatch");
  if (state.group_count() != modules.size() + 1) throw DimensionError("adam_apply: group count mismatch");
  for (std::size_t k = 0; k < modules.size(); ++k)
    adam_update(state.moments(k), modules[k], packet.modules[k], lr, packet.step, state.adam_params());
  adam_update(state.moments(modules.size()), {&vocab_matrix}, {packet.embedding}, lr, packet.step,
              state.adam_params());
}

}  // namespace ouro
