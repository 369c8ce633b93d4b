#pragma once

#include <iosfwd>
#include <vector>

#include "ouroboros/metrics.hpp"

namespace ouro {

// Trends of the applied squared gradient norm. The logged norm is that of
// the delayed packet the optimizer applied, a proxy for E||grad f(w^t)||^2.
struct GradientNormSummary {
  std::size_t steps = 0;
  std::vector<double> running_average;   // A(T) = (1/T) sum_{t<T} g_t
  std::vector<double> weighted_average;  // W(T) = sum gamma_t g_t / sum gamma_t
  // |A(T) - A(3T/4)| / A(T); 0 when A(T) = 0.
  double plateau_change = 0.0;
  bool plateaued = false;
  bool above_zero = false;
  double weighted_at_tenth = 0.0;  // W(T/10)
  double weighted_final = 0.0;     // W(T)
  bool weighted_decreasing = false;
};

GradientNormSummary gradient_norm_report(const std::vector<MetricsRow>& rows, double plateau_tolerance = 0.1);

void write_summary(std::ostream& out, const GradientNormSummary& summary);

}  // namespace ouro
