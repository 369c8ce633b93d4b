#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "ouroboros/partition.hpp"

namespace ouro {

enum class Phase { forward, backward, idle };
const char* to_string(Phase phase);

struct TraceRecord {
  std::int64_t step = 0;
  std::size_t module = 0;
  Phase phase = Phase::idle;
  std::int64_t sample = -1;
  double start = 0.0;  // logical clock units
  double end = 0.0;
};

struct ScheduleTrace {
  std::vector<TraceRecord> records;

  // One JSON object per line: step, module, phase, sample, start, end.
  void write_jsonl(std::ostream& out) const;
};

// Synthetic per-module costs for the logical clock. `relay` is charged once
// per module boundary crossed by an activation or boundary gradient.
struct CostModel {
  std::vector<double> forward;
  std::vector<double> backward;
  double relay = 0.0;

  bool empty() const { return backward.empty(); }
  static CostModel uniform(std::size_t modules, double forward, double backward, double relay = 0.0);
  // One unit per layer forward, two per layer backward.
  static CostModel from_partition(const ModulePartition& partition);
};

enum class ExecutionMode { sequential, ouroboros };

// Appends the forward/backward/idle records of one step starting at logical
// time `start` and returns the step's logical duration.
//   ouroboros:  forward relay 0..K-1, then every due module runs its backward
//               at once; the step ends with the slowest one.
//   sequential: forward relay, then backward K-1..0 one after another.
// `backward_samples[k]` is the sample module k back-propagates, -1 when idle.
double record_step(ScheduleTrace& trace, const CostModel& costs, ExecutionMode mode,
                   std::int64_t step, std::span<const std::int64_t> backward_samples,
                   double start);

}  // namespace ouro
