#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ouroboros/layers.hpp"

namespace ouro {

struct TensorCheck {
  std::string name;
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
};

struct GradCheckResult {
  std::string subject;
  std::vector<TensorCheck> tensors;

  double max_rel_error() const;
  bool passed(double tolerance) const { return max_rel_error() < tolerance; }
};

// Central differences (step h) of the scalar probe sum(R * output) for a
// random projection R, against layer_backward with grad_out = R. The layer,
// input, tokens and R are drawn from `seed`; dropout is on with a fixed
// stream, so the masks are constants of the probe.
GradCheckResult check_layer_gradients(LayerKind kind, const ModelDims& dims, std::uint64_t seed,
                                      double h = 1e-5);

// Same for the whole model's mean loss against full_backprop; the tied
// matrix is checked against dV_i + dV_o.
GradCheckResult check_model_gradients(const ModelDims& dims, std::uint64_t seed, double h = 1e-5);

// Small dimensions (all <= 8) used by the built-in checks.
ModelDims gradcheck_dims();

}  // namespace ouro
