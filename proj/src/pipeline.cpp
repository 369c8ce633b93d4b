#include "ouroboros/pipeline.hpp"

#include <chrono>
#include <optional>
#include <string>

namespace ouro {

Tensor embedding_gradient(std::int64_t t, std::size_t modules, const Tensor& grad_vo_fresh,
                          const Tensor* grad_vi_stale, TiedGrad mode) {
  const bool stale_exists = t - static_cast<std::int64_t>(modules) + 1 >= 0;
  if (stale_exists != (grad_vi_stale != nullptr)) {
    throw std::invalid_argument("embedding_gradient: stale input-embedding gradient must be present iff t-K+1 >= 0");
  }
  if (!stale_exists) return Tensor(grad_vo_fresh.shape());
  if (grad_vi_stale->shape() != grad_vo_fresh.shape()) {
    throw DimensionError("embedding_gradient: shape mismatch " + shape_string(grad_vo_fresh.shape()) +
                         " vs " + shape_string(grad_vi_stale->shape()));
  }
  Tensor sum = add(grad_vo_fresh, *grad_vi_stale);
  return mode == TiedGrad::half_avg ? scale(sum, 0.5) : sum;
}

PipelineEngine::PipelineEngine(Model model, EngineOptions options)
    : options_(std::move(options)),
      partition_(ouro::partition(model.layers.size(), options_.modules, options_.balance,
                                 options_.layer_costs)),
      dims_(model.dims),
      vocab_(std::move(model.vocab_matrix)) {
  if (model.layers.front().kind != LayerKind::embedding || model.layers.back().kind != LayerKind::head) {
    throw std::invalid_argument("pipeline: model must start with an embedding and end with a head");
  }
  if (options_.costs.empty()) options_.costs = CostModel::from_partition(partition_);
  if (options_.costs.backward.size() != partition_.module_count()) {
    throw std::invalid_argument("pipeline: cost model has " + std::to_string(options_.costs.backward.size()) +
                                " modules, partition has " + std::to_string(partition_.module_count()));
  }
  const std::size_t K = partition_.module_count();
  modules_.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const LayerRange g = partition_.groups[k];
    std::vector<Layer> layers(std::make_move_iterator(model.layers.begin() + g.begin),
                              std::make_move_iterator(model.layers.begin() + g.end));
    modules_.emplace_back(k, K, g.begin, std::move(layers), dims_);
  }
}

Model PipelineEngine::model() const {
  Model m;
  m.dims = dims_;
  m.vocab_matrix = vocab_;
  for (const auto& mod : modules_)
    for (const auto& layer : mod.layers()) m.layers.push_back(layer);
  return m;
}

double PipelineEngine::advance_clock(std::int64_t t, std::span<const std::int64_t> samples) {
  const double d = record_step(trace_, options_.costs, ExecutionMode::ouroboros, t, samples, clock_);
  clock_ += d;
  return d;
}

GradientPacket PipelineEngine::compute(std::int64_t t, const BatchSample& batch, double& loss) {
  const std::size_t K = modules_.size();
  batch.validate(dims_.vocab);

  Tensor h;
  for (std::size_t k = 0; k < K; ++k) {
    h = modules_[k].forward(k == 0 ? nullptr : &h, batch, t, t, vocab_, options_.dropout_seed,
                            options_.train);
  }
  loss = h[0];

  GradientPacket packet;
  packet.step = t;
  packet.modules.resize(K);
  packet.samples.assign(K, -1);
  std::vector<std::optional<BoundaryGradient>> outgoing(K);
  Tensor dvo, dvi;
  bool have_dvi = false;
  for (std::size_t k = K; k-- > 0;) {
    ModuleState& m = modules_[k];
    if (!m.backward_due(t)) {
      for (const auto& layer : m.layers())
        for (const auto& p : layer.params) packet.modules[k].emplace_back(p.shape());
      continue;
    }
    const std::int64_t s = t - m.delay();
    Tensor grad_out;
    if (!m.is_last()) {
      if (m.inbox().empty() || m.inbox().front().sample_step != s) {
        throw ScheduleViolation("module " + std::to_string(k) + ": missing boundary gradient for sample step " +
                                std::to_string(s));
      }
      grad_out = std::move(m.inbox().front().grad);
      m.inbox().pop_front();
    }
    ModuleBackward b = m.backward(t, grad_out, vocab_, options_.stale_weights, options_.train);
    for (const auto& g : b.weight_grads) g.require_finite("module gradient");
    packet.modules[k] = std::move(b.weight_grads);
    packet.samples[k] = s;
    if (m.is_last()) dvo = std::move(b.output_projection_grad);
    if (m.is_first()) {
      dvi = std::move(b.input_embedding_grad);
      have_dvi = true;
    } else {
      outgoing[k] = BoundaryGradient{s, std::move(b.grad_input)};
    }
  }
  for (std::size_t k = 1; k < K; ++k) {
    if (outgoing[k]) modules_[k - 1].inbox().push_back(std::move(*outgoing[k]));
  }
  packet.embedding = embedding_gradient(t, K, dvo, have_dvi ? &dvi : nullptr, options_.tied_grad);
  packet.embedding.require_finite("embedding gradient");
  packet.embedding_stale_sample = have_dvi ? t - static_cast<std::int64_t>(K) + 1 : -1;
  return packet;
}

void PipelineEngine::apply(const GradientPacket& packet, Optimizer& optimizer, double lr) {
  const std::size_t K = modules_.size();
  if (optimizer.group_count() != K + 1) {
    throw std::invalid_argument("pipeline: optimizer needs K+1 parameter groups");
  }
  for (std::size_t k = 0; k < K; ++k) {
    optimizer.apply_group(k, modules_[k].param_refs(), packet.modules[k], lr, packet.step);
  }
  optimizer.apply_group(K, {&vocab_}, {packet.embedding}, lr, packet.step);
}

StepRecord PipelineEngine::step(std::int64_t t, const BatchSample& batch, Optimizer& optimizer,
                                double lr) {
  StepRecord r;
  r.packet = compute(t, batch, r.loss);
  r.logical = advance_clock(t, r.packet.samples);
  apply(r.packet, optimizer, lr);
  return r;
}

ParamRefs model_param_refs(Model& model) {
  ParamRefs refs;
  for (auto& layer : model.layers)
    for (auto& p : layer.params) refs.push_back(&p);
  return refs;
}

SequentialStep sequential_gradient(std::int64_t t, const BatchSample& batch, const Model& model,
                                   TiedGrad tied_grad, std::uint64_t dropout_seed, bool train) {
  FullGradient full = full_backprop(model, batch, dropout_seed, t, train);
  SequentialStep out;
  out.loss = full.loss;
  out.packet.step = t;
  out.packet.samples = {t};
  out.packet.embedding_stale_sample = t;
  out.packet.modules.resize(1);
  for (auto& lg : full.layers)
    for (auto& g : lg) out.packet.modules[0].push_back(std::move(g));
  out.packet.embedding = embedding_gradient(t, 1, full.output_projection, &full.input_embedding, tied_grad);
  return out;
}

SequentialStep sequential_step(std::int64_t t, const BatchSample& batch, Model& model,
                               Optimizer& optimizer, double lr, TiedGrad tied_grad,
                               std::uint64_t dropout_seed, bool train) {
  if (optimizer.group_count() != 2) throw std::invalid_argument("sequential_step: optimizer needs 2 groups");
  SequentialStep s = sequential_gradient(t, batch, model, tied_grad, dropout_seed, train);
  optimizer.apply_group(0, model_param_refs(model), s.packet.modules[0], lr, t);
  optimizer.apply_group(1, {&model.vocab_matrix}, {s.packet.embedding}, lr, t);
  return s;
}

void run_reference(PipelineEngine& engine, const BatchSource& batches, Optimizer& optimizer,
                   const LrSchedule& schedule, std::int64_t first, std::int64_t count,
                   const StepObserver& observer) {
  for (std::int64_t t = first; t < first + count; ++t) {
    const auto start = std::chrono::steady_clock::now();
    StepRecord r = engine.step(t, batches(t), optimizer, lr_at(schedule, t));
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (observer) observer(r);
  }
}

}  // namespace ouro
