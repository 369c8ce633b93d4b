#include "ouroboros/report.hpp"

#include <cmath>
#include <ostream>

namespace ouro {

GradientNormSummary gradient_norm_report(const std::vector<MetricsRow>& rows, double plateau_tolerance) {
  GradientNormSummary s;
  s.steps = rows.size();
  if (rows.empty()) return s;
  double sum = 0.0;
  double weighted = 0.0;
  double weights = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sum += rows[i].grad_sq_norm;
    weighted += rows[i].lr * rows[i].grad_sq_norm;
    weights += rows[i].lr;
    s.running_average.push_back(sum / static_cast<double>(i + 1));
    s.weighted_average.push_back(weights > 0.0 ? weighted / weights : 0.0);
  }
  const std::size_t T = rows.size();
  const double final_avg = s.running_average.back();
  const double earlier = s.running_average[std::max<std::size_t>(3 * T / 4, 1) - 1];
  s.plateau_change = final_avg == 0.0 ? 0.0 : std::abs(final_avg - earlier) / final_avg;
  s.plateaued = s.plateau_change < plateau_tolerance;
  s.above_zero = final_avg > 0.0;
  s.weighted_at_tenth = s.weighted_average[std::max<std::size_t>(T / 10, 1) - 1];
  s.weighted_final = s.weighted_average.back();
  s.weighted_decreasing = s.weighted_final < s.weighted_at_tenth;
  return s;
}

void write_summary(std::ostream& out, const GradientNormSummary& s) {
  out << "steps " << s.steps << '\n';
  if (s.steps == 0) return;
  out << "squared gradient norm of the applied (delayed) packet, a proxy for E||grad f||^2\n";
  out << "running average A(T) " << s.running_average.back() << ", A(3T/4) "
      << s.running_average[std::max<std::size_t>(3 * s.steps / 4, 1) - 1] << ", relative change "
      << s.plateau_change << (s.plateaued ? " (plateau" : " (no plateau")
      << (s.above_zero ? ", above 0)" : ", at 0)") << '\n';
  out << "step-weighted average W(T/10) " << s.weighted_at_tenth << ", W(T) " << s.weighted_final
      << (s.weighted_decreasing ? " (decreasing)" : " (not decreasing)") << '\n';
}

}  // namespace ouro
