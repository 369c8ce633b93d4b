#pragma once

#include <cstdint>

namespace ouro {

enum class ScheduleMode { fixed, diminishing, warmup_cosine };

struct LrSchedule {
  double base = 2.5e-4;
  std::int64_t warmup = 0;
  std::int64_t total = 1;
  ScheduleMode mode = ScheduleMode::warmup_cosine;
};

// fixed:          base
// diminishing:    base / (1 + t)
// warmup_cosine:  base * (t + 1) / W for t < W, then
//                 base * (1 + cos(pi * (t - W) / (T - W))) / 2, reaching 0 at t = T.
// Throws std::invalid_argument for t < 0, and for W >= T in warmup_cosine mode.
double lr_at(const LrSchedule& schedule, std::int64_t t);

}  // namespace ouro
