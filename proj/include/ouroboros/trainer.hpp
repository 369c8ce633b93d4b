#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ouroboros/checkpoint.hpp"
#include "ouroboros/config.hpp"
#include "ouroboros/metrics.hpp"
#include "ouroboros/pipeline.hpp"

namespace ouro {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using RowObserver = std::function<void(const MetricsRow&)>;

// One training run in any of the three modes, resumable from a checkpoint
// that holds weights, optimizer moments, and the in-flight pipeline state
// (stale slots, weight snapshots, pending boundary gradients). Batches and
// dropout masks are pure functions of (seed, step), so no RNG stream needs
// saving beyond the seeds.
class TrainingRun {
 public:
  explicit TrainingRun(const RunConfig& config);

  const RunConfig& config() const { return config_; }
  std::int64_t next_step() const { return next_step_; }
  double logical_clock() const;

  // Runs steps [next_step(), until). Throws DivergenceError on a non-finite
  // loss or gradient.
  void run(const BatchSource& batches, std::int64_t until, const RowObserver& on_row = {});

  Model model() const;
  const ScheduleTrace& trace() const;
  PipelineEngine* engine() { return engine_.get(); }

  Checkpoint save_state() const;
  // Restores a state saved by a run with the same model, mode and K.
  void load_state(const Checkpoint& checkpoint);

 private:
  MetricsRow row_for(const StepRecord& record, double lr) const;

  RunConfig config_;
  std::int64_t next_step_ = 0;
  std::unique_ptr<PipelineEngine> engine_;  // ouroboros modes
  std::optional<Model> model_;              // sequential mode
  Optimizer optimizer_;
  CostModel sequential_costs_;
  ScheduleTrace sequential_trace_;
  double sequential_clock_ = 0.0;
};

// <dir>/checkpoint.bin plus the RunConfig sidecar <dir>/checkpoint.json.
void save_run(const TrainingRun& run, const std::filesystem::path& dir);
// Rebuilds the run from the sidecar config and restores its state.
TrainingRun resume_run(const std::filesystem::path& dir);

}  // namespace ouro
