#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ouroboros/config.hpp"
#include "ouroboros/pipeline.hpp"

namespace ouro {

// Equal per-module costs replacing the partition-derived ones.
struct SyntheticCosts {
  double forward = 0.5;
  double backward = 1.0;
  double relay = 0.1;
};

struct BenchOptions {
  std::int64_t steps = 20;
  std::optional<SyntheticCosts> synthetic;
};

struct BenchRow {
  std::size_t k = 0;
  double sequential_steps_per_sec = 0.0;
  double ouroboros_steps_per_sec = 0.0;
  // Logical clock, averaged over steady-state steps t >= K-1.
  double sequential_step_time = 0.0;
  double ouroboros_step_time = 0.0;
  double sequential_backward_time = 0.0;  // backward phase only
  double ouroboros_backward_time = 0.0;
  double max_module_backward = 0.0;       // slowest single module's backward cost
  std::vector<double> utilization;        // steady-state backward slots used, per module
  std::size_t steady_idle_slots = 0;

  double backward_speedup() const { return sequential_backward_time / ouroboros_backward_time; }
  double step_speedup() const { return sequential_step_time / ouroboros_step_time; }
};

// Per K: wall-clock throughput of plain back-propagation and of the
// concurrent executor (reference executor for K = 1), and the logical-clock
// schedule of both from their traces. Throws ConfigError if any K exceeds
// the layer count.
std::vector<BenchRow> bench(const RunConfig& config, const BatchSource& batches,
                            std::span<const std::size_t> ks, const BenchOptions& options = {});

void write_bench_table(std::ostream& out, const std::vector<BenchRow>& rows);

struct StepSpans {
  std::vector<double> step;      // logical duration of each step
  std::vector<double> backward;  // from the end of its forward relay to the next step
};

// Step t spans from its first record to the first record of step t+1; the
// last step ends at `final_clock`.
StepSpans step_spans(const ScheduleTrace& trace, std::int64_t steps, double final_clock);

}  // namespace ouro
