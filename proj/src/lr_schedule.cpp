#include "ouroboros/lr_schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ouro {

double lr_at(const LrSchedule& s, std::int64_t t) {
  if (t < 0) throw std::invalid_argument("lr_at: negative step");
  if (!(s.base > 0.0)) throw std::invalid_argument("lr_at: base learning rate must be positive");
  switch (s.mode) {
    case ScheduleMode::fixed:
      return s.base;
    case ScheduleMode::diminishing:
      return s.base / (1.0 + static_cast<double>(t));
    case ScheduleMode::warmup_cosine: {
      if (s.warmup < 0 || s.warmup >= s.total) {
        throw std::invalid_argument("lr_at: warm-up steps must be below total steps");
      }
      if (t < s.warmup) return s.base * static_cast<double>(t + 1) / static_cast<double>(s.warmup);
      const double progress = static_cast<double>(std::min(t, s.total) - s.warmup) /
                              static_cast<double>(s.total - s.warmup);
      return s.base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }
  }
  return s.base;
}

}  // namespace ouro
