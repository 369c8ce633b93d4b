#include "ouroboros/concurrent.hpp"

#include <chrono>
#include <memory>
#include <sstream>
#include <thread>
#include <vector>

namespace ouro {

void StepBarrier::arrive_and_wait() {
  std::unique_lock lock(mutex_);
  if (cancelled_) throw ChannelClosed();
  const std::uint64_t gen = generation_;
  if (++arrived_ == parties_) {
    try {
      if (completion_) completion_();
    } catch (...) {
      cancelled_ = true;
      cv_.notify_all();
      throw;
    }
    arrived_ = 0;
    ++generation_;
    cv_.notify_all();
    return;
  }
  cv_.wait(lock, [&] { return cancelled_ || generation_ != gen; });
  if (generation_ == gen) throw ChannelClosed();
}

void StepBarrier::cancel() {
  std::lock_guard lock(mutex_);
  cancelled_ = true;
  cv_.notify_all();
}

namespace {

struct StepShared {
  std::vector<ParamList> grads;
  std::vector<std::int64_t> samples;
  Tensor dvo;
  Tensor dvi;
  bool have_dvi = false;
  double loss = 0.0;
  Tensor embedding_grad;
  BatchSample batch;
  std::int64_t t = 0;
  double lr = 0.0;
  double logical = 0.0;
};

}  // namespace

void run_concurrent(PipelineEngine& engine, const BatchSource& batches, Optimizer& optimizer,
                    const LrSchedule& schedule, std::int64_t first, std::int64_t count,
                    const StepObserver& observer) {
  const std::size_t K = engine.module_count();
  if (K < 2) throw std::invalid_argument("run_concurrent: needs at least two modules");
  if (count <= 0) return;
  if (optimizer.group_count() != K + 1) throw std::invalid_argument("run_concurrent: optimizer needs K+1 groups");

  auto& modules = engine.modules();
  const EngineOptions& opts = engine.options();

  std::vector<std::unique_ptr<Channel<Tensor>>> forward_ch;
  std::vector<std::unique_ptr<Channel<BoundaryGradient>>> backward_ch;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    forward_ch.push_back(std::make_unique<Channel<Tensor>>(K));
    backward_ch.push_back(std::make_unique<Channel<BoundaryGradient>>(K));
    for (auto& msg : modules[k].inbox()) backward_ch[k]->push(std::move(msg));
    modules[k].inbox().clear();
  }

  StepShared shared;
  shared.grads.resize(K);
  shared.samples.assign(K, -1);
  shared.t = first;
  shared.batch = batches(first);
  shared.batch.validate(modules.front().dims().vocab);
  shared.lr = lr_at(schedule, first);
  auto last_tick = std::chrono::steady_clock::now();

  // Phase A completion: every gradient of step t exists; mix and apply g_V.
  StepBarrier gradients_ready(K, [&] {
    shared.embedding_grad = embedding_gradient(shared.t, K, shared.dvo,
                                               shared.have_dvi ? &shared.dvi : nullptr, opts.tied_grad);
    shared.embedding_grad.require_finite("embedding gradient");
    shared.logical = engine.advance_clock(shared.t, shared.samples);
    optimizer.apply_group(K, {&engine.vocab_matrix()}, {shared.embedding_grad}, shared.lr, shared.t);
  });
  // Phase B completion: all groups updated; publish the step, stage the next.
  StepBarrier step_done(K, [&] {
    StepRecord r;
    r.loss = shared.loss;
    r.logical = shared.logical;
    r.packet.step = shared.t;
    r.packet.samples = shared.samples;
    r.packet.embedding_stale_sample = shared.have_dvi ? shared.t - static_cast<std::int64_t>(K) + 1 : -1;
    r.packet.modules = std::move(shared.grads);
    r.packet.embedding = std::move(shared.embedding_grad);
    const auto now = std::chrono::steady_clock::now();
    r.wall_ms = std::chrono::duration<double, std::milli>(now - last_tick).count();
    last_tick = now;
    shared.grads.assign(K, {});
    shared.samples.assign(K, -1);
    shared.have_dvi = false;
    shared.dvi = Tensor();
    shared.dvo = Tensor();
    if (observer) observer(r);
    ++shared.t;
    if (shared.t < first + count) {
      shared.batch = batches(shared.t);
      shared.batch.validate(modules.front().dims().vocab);
      shared.lr = lr_at(schedule, shared.t);
    }
  });

  std::mutex failure_mutex;
  std::string failure;
  auto abort_all = [&] {
    for (auto& ch : forward_ch) ch->close();
    for (auto& ch : backward_ch) ch->close();
    gradients_ready.cancel();
    step_done.cancel();
  };

  auto worker = [&](std::size_t k) {
    ModuleState& m = modules[k];
    std::int64_t t = first;
    try {
      for (; t < first + count; ++t) {
        const BatchSample& batch = shared.batch;
        Tensor input;
        if (k > 0) input = forward_ch[k - 1]->pop();
        Tensor out = m.forward(k > 0 ? &input : nullptr, batch, t, t, engine.vocab_matrix(),
                               opts.dropout_seed, opts.train);
        if (k + 1 < K) {
          forward_ch[k]->push(std::move(out));
        } else {
          shared.loss = out[0];
        }

        if (m.backward_due(t)) {
          const std::int64_t s = t - m.delay();
          Tensor grad_out;
          if (k + 1 < K) {
            BoundaryGradient msg = backward_ch[k]->pop();
            if (msg.sample_step != s) {
              throw ScheduleViolation("module " + std::to_string(k) + ": boundary gradient for sample " +
                                      std::to_string(msg.sample_step) + ", expected " + std::to_string(s));
            }
            grad_out = std::move(msg.grad);
          }
          ModuleBackward b = m.backward(t, grad_out, engine.vocab_matrix(), opts.stale_weights, opts.train);
          for (const auto& g : b.weight_grads) g.require_finite("module gradient");
          shared.grads[k] = std::move(b.weight_grads);
          shared.samples[k] = s;
          if (m.is_last()) shared.dvo = std::move(b.output_projection_grad);
          if (m.is_first()) {
            shared.dvi = std::move(b.input_embedding_grad);
            shared.have_dvi = true;
          } else {
            backward_ch[k - 1]->push(BoundaryGradient{s, std::move(b.grad_input)});
          }
        } else {
          ParamList zeros;
          for (const auto& layer : m.layers())
            for (const auto& p : layer.params) zeros.emplace_back(p.shape());
          shared.grads[k] = std::move(zeros);
        }

        gradients_ready.arrive_and_wait();
        optimizer.apply_group(k, m.param_refs(), shared.grads[k], shared.lr, t);
        step_done.arrive_and_wait();
      }
    } catch (const ChannelClosed&) {
      // Another worker failed first.
    } catch (const std::exception& e) {
      {
        std::lock_guard lock(failure_mutex);
        if (failure.empty()) {
          failure = "worker for module " + std::to_string(k + 1) + " failed at step " +
                    std::to_string(t) + ": " + e.what();
        }
      }
      abort_all();
    }
  };

  {
    std::vector<std::jthread> threads;
    threads.reserve(K);
    for (std::size_t k = 0; k < K; ++k) threads.emplace_back(worker, k);
  }

  if (!failure.empty()) {
    std::ostringstream msg;
    msg << failure << "\nlast trace records:\n";
    const auto& recs = engine.trace().records;
    ScheduleTrace tail;
    for (std::size_t i = recs.size() > 3 * K ? recs.size() - 3 * K : 0; i < recs.size(); ++i)
      tail.records.push_back(recs[i]);
    tail.write_jsonl(msg);
    throw WorkerFailure(msg.str(), engine.trace());
  }

  for (std::size_t k = 0; k + 1 < K; ++k) {
    for (auto& msg : backward_ch[k]->drain()) modules[k].inbox().push_back(std::move(msg));
  }
}

}  // namespace ouro
