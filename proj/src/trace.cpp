#include "ouroboros/trace.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace ouro {

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::forward: return "forward";
    case Phase::backward: return "backward";
    case Phase::idle: return "idle";
  }
  return "?";
}

void ScheduleTrace::write_jsonl(std::ostream& out) const {
  for (const auto& r : records) {
    nlohmann::json j = {{"step", r.step},   {"module", r.module + 1}, {"phase", to_string(r.phase)},
                        {"sample", r.sample}, {"start", r.start},     {"end", r.end}};
    out << j.dump() << '\n';
  }
}

CostModel CostModel::uniform(std::size_t modules, double forward, double backward, double relay) {
  CostModel c;
  c.forward.assign(modules, forward);
  c.backward.assign(modules, backward);
  c.relay = relay;
  return c;
}

CostModel CostModel::from_partition(const ModulePartition& partition) {
  CostModel c;
  for (const auto& g : partition.groups) {
    c.forward.push_back(static_cast<double>(g.size()));
    c.backward.push_back(2.0 * static_cast<double>(g.size()));
  }
  return c;
}

double record_step(ScheduleTrace& trace, const CostModel& costs, ExecutionMode mode,
                   std::int64_t step, std::span<const std::int64_t> backward_samples,
                   double start) {
  const std::size_t K = backward_samples.size();
  if (costs.forward.size() != K || costs.backward.size() != K) {
    throw std::invalid_argument("record_step: cost model does not match module count");
  }
  double clock = start;
  for (std::size_t k = 0; k < K; ++k) {
    if (k > 0) clock += costs.relay;
    trace.records.push_back({step, k, Phase::forward, step, clock, clock + costs.forward[k]});
    clock += costs.forward[k];
  }
  const double forward_end = clock;
  double end = forward_end;
  if (mode == ExecutionMode::ouroboros) {
    double slowest = 0.0;
    for (std::size_t k = 0; k < K; ++k)
      if (backward_samples[k] >= 0) slowest = std::max(slowest, costs.backward[k]);
    // Boundary gradients travel during the step and are consumed next step,
    // so one relay hop overlaps with the backward window.
    const double window = slowest + (K > 1 ? costs.relay : 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      if (backward_samples[k] >= 0) {
        trace.records.push_back({step, k, Phase::backward, backward_samples[k], forward_end,
                                 forward_end + costs.backward[k]});
      } else {
        trace.records.push_back({step, k, Phase::idle, -1, forward_end, forward_end + window});
      }
    }
    end = forward_end + window;
  } else {
    for (std::size_t i = K; i-- > 0;) {
      if (i + 1 < K) clock += costs.relay;
      if (backward_samples[i] >= 0) {
        trace.records.push_back({step, i, Phase::backward, backward_samples[i], clock,
                                 clock + costs.backward[i]});
        clock += costs.backward[i];
      }
    }
    end = clock;
  }
  return end - start;
}

}  // namespace ouro
