#include "ouroboros/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <ostream>

#include "ouroboros/concurrent.hpp"

namespace ouro {

namespace {

double steady_mean(const std::vector<double>& v, std::size_t from) {
  if (from >= v.size()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = from; i < v.size(); ++i) sum += v[i];
  return sum / static_cast<double>(v.size() - from);
}

double elapsed_s(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

StepSpans step_spans(const ScheduleTrace& trace, std::int64_t steps, double final_clock) {
  const auto n = static_cast<std::size_t>(steps);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> start(n, inf), forward_end(n, -inf);
  for (const auto& r : trace.records) {
    if (r.step < 0 || r.step >= steps) continue;
    const auto i = static_cast<std::size_t>(r.step);
    start[i] = std::min(start[i], r.start);
    if (r.phase == Phase::forward) forward_end[i] = std::max(forward_end[i], r.end);
  }
  StepSpans s;
  for (std::size_t i = 0; i < n; ++i) {
    const double end = i + 1 < n ? start[i + 1] : final_clock;
    s.step.push_back(end - start[i]);
    s.backward.push_back(end - forward_end[i]);
  }
  return s;
}

std::vector<BenchRow> bench(const RunConfig& config, const BatchSource& batches,
                            std::span<const std::size_t> ks, const BenchOptions& options) {
  std::vector<BenchRow> rows;
  const Model initial = init_model(config.dims(), config.init_seed);
  const LrSchedule schedule = config.lr_schedule();
  const std::int64_t steps = options.steps;
  for (std::size_t K : ks) {
    RunConfig c = config;
    c.k = K;
    c.validate(false);
    EngineOptions eo = c.engine_options();
    if (options.synthetic) {
      eo.costs = CostModel::uniform(K, options.synthetic->forward, options.synthetic->backward,
                                    options.synthetic->relay);
    }
    PipelineEngine engine(initial, eo);
    const CostModel costs = engine.costs();
    BenchRow row;
    row.k = K;
    row.max_module_backward = *std::max_element(costs.backward.begin(), costs.backward.end());

    // Plain back-propagation over the same K devices, one after another.
    {
      Model model = initial;
      Optimizer opt(c.optimizer, 2);
      ScheduleTrace trace;
      double clock = 0.0;
      const auto start = std::chrono::steady_clock::now();
      for (std::int64_t t = 0; t < steps; ++t) {
        sequential_step(t, batches(t), model, opt, lr_at(schedule, t), eo.tied_grad, eo.dropout_seed, eo.train);
        const std::vector<std::int64_t> all(K, t);
        clock += record_step(trace, costs, ExecutionMode::sequential, t, all, clock);
      }
      row.sequential_steps_per_sec = static_cast<double>(steps) / elapsed_s(start);
      const StepSpans s = step_spans(trace, steps, clock);
      row.sequential_step_time = steady_mean(s.step, K - 1);
      row.sequential_backward_time = steady_mean(s.backward, K - 1);
    }

    {
      Optimizer opt(c.optimizer, K + 1);
      const auto start = std::chrono::steady_clock::now();
      if (K > 1) {
        run_concurrent(engine, batches, opt, schedule, 0, steps);
      } else {
        run_reference(engine, batches, opt, schedule, 0, steps);
      }
      row.ouroboros_steps_per_sec = static_cast<double>(steps) / elapsed_s(start);
      const ScheduleTrace& trace = engine.trace();
      const StepSpans s = step_spans(trace, steps, engine.logical_clock());
      row.ouroboros_step_time = steady_mean(s.step, K - 1);
      row.ouroboros_backward_time = steady_mean(s.backward, K - 1);

      row.utilization.assign(K, 0.0);
      const auto steady = static_cast<std::int64_t>(K) - 1;
      for (const auto& r : trace.records) {
        if (r.step < steady) continue;
        if (r.phase == Phase::backward) row.utilization[r.module] += 1.0;
        if (r.phase == Phase::idle) ++row.steady_idle_slots;
      }
      const double steady_steps = static_cast<double>(std::max<std::int64_t>(steps - steady, 1));
      for (double& u : row.utilization) u /= steady_steps;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_bench_table(std::ostream& out, const std::vector<BenchRow>& rows) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%3s %12s %12s %10s %10s %10s %10s %9s %9s %5s  %s\n", "K", "seq_step/s",
                "ouro_step/s", "seq_time", "ouro_time", "seq_bwd", "ouro_bwd", "bwd_x", "step_x", "idle",
                "utilization");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%3zu %12.3f %12.3f %10.3f %10.3f %10.3f %10.3f %9.3f %9.3f %5zu ", r.k,
                  r.sequential_steps_per_sec, r.ouroboros_steps_per_sec, r.sequential_step_time,
                  r.ouroboros_step_time, r.sequential_backward_time, r.ouroboros_backward_time,
                  r.backward_speedup(), r.step_speedup(), r.steady_idle_slots);
    out << buf;
    for (std::size_t k = 0; k < r.utilization.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%s%.0f%%", k ? " " : " ", 100.0 * r.utilization[k]);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace ouro
