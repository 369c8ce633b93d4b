#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>

#include "ouroboros/pipeline.hpp"

namespace ouro {

class ChannelClosed : public std::runtime_error {
 public:
  ChannelClosed() : std::runtime_error("channel closed") {}
};

// Bounded blocking FIFO between two workers.
template <class T>
class Channel {
 public:
  explicit Channel(std::size_t capacity) : capacity_(capacity) {}

  void push(T value) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) throw ChannelClosed();
    items_.push_back(std::move(value));
    not_empty_.notify_one();
  }

  T pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (closed_) throw ChannelClosed();
    T value = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return value;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

  // Only valid once no worker touches the channel.
  std::deque<T> drain() { return std::move(items_); }

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

// Reusable barrier whose completion step runs once per phase in the last
// arriving thread. cancel() releases every waiter with ChannelClosed.
class StepBarrier {
 public:
  StepBarrier(std::size_t parties, std::function<void()> completion)
      : parties_(parties), completion_(std::move(completion)) {}

  void arrive_and_wait();
  void cancel();

 private:
  std::size_t parties_;
  std::function<void()> completion_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::size_t arrived_ = 0;
  std::uint64_t generation_ = 0;
  bool cancelled_ = false;
};

class WorkerFailure : public std::runtime_error {
 public:
  WorkerFailure(const std::string& what, ScheduleTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const ScheduleTrace& trace() const { return trace_; }

 private:
  ScheduleTrace trace_;
};

// One worker thread per module. Activations and boundary gradients move
// through bounded FIFOs of capacity K; the shared matrix is updated at a
// per-step barrier, after which each worker updates its own group. Queue
// contents and reduction orders do not depend on thread interleaving, so the
// packets equal run_reference's bit for bit. Requires K >= 2.
// Throws WorkerFailure (carrying the trace so far) if any worker fails.
void run_concurrent(PipelineEngine& engine, const BatchSource& batches, Optimizer& optimizer,
                    const LrSchedule& schedule, std::int64_t first, std::int64_t count,
                    const StepObserver& observer = {});

}  // namespace ouro
