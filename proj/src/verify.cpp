#include "ouroboros/verify.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <ostream>
#include <set>

#include "ouroboros/model.hpp"

namespace ouro {

namespace {

double max_deviation(const ParamList& a, const ParamList& b, bool& bitwise) {
  if (a.size() != b.size()) throw DimensionError("verify: gradient tensor count mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, max_abs_diff(a[i], b[i]));
    bitwise = bitwise && bitwise_equal(a[i], b[i]);
  }
  return m;
}

bool same_backward(const ModuleBackward& a, const ModuleBackward& b) {
  if (a.weight_grads.size() != b.weight_grads.size()) return false;
  for (std::size_t i = 0; i < a.weight_grads.size(); ++i)
    if (!bitwise_equal(a.weight_grads[i], b.weight_grads[i])) return false;
  return bitwise_equal(a.grad_input, b.grad_input) && bitwise_equal(a.input_embedding_grad, b.input_embedding_grad) &&
         bitwise_equal(a.output_projection_grad, b.output_projection_grad);
}

// Picks up to `count` (module, step) pairs among those that run a backward.
std::set<std::pair<std::size_t, std::int64_t>> replay_pairs(std::size_t K, std::int64_t steps,
                                                            std::size_t count, std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::int64_t>> all;
  for (std::int64_t t = 0; t < steps; ++t)
    for (std::size_t k = 0; k < K; ++k)
      if (t >= static_cast<std::int64_t>(K - 1 - k)) all.emplace_back(k, t);
  SeededRng rng(derive_seed(seed, 0x7265));
  for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng.next_below(i)]);
  all.resize(std::min(count, all.size()));
  return {all.begin(), all.end()};
}

}  // namespace

bool VerifyReport::gradchecks_ok() const {
  return std::all_of(gradchecks.begin(), gradchecks.end(),
                     [&](const GradCheckResult& g) { return g.passed(options.fd_tolerance); });
}

bool VerifyReport::passed() const {
  return oracle_ok() && gradchecks_ok() && replay_mismatches == 0 && k1_bitwise && tie_ok;
}

void VerifyReport::write(std::ostream& out) const {
  out << "oracle replay: K=" << modules << ", " << steps << " steps, " << oracle.size() << " gradients\n";
  std::vector<double> per_module(modules + 1, 0.0);
  for (const auto& e : oracle) per_module[e.module] = std::max(per_module[e.module], e.deviation);
  for (std::size_t k = 0; k <= modules; ++k) {
    out << "  " << (k == modules ? std::string("V") : "module " + std::to_string(k + 1))
        << " max abs deviation " << per_module[k] << '\n';
  }
  out << "  max abs deviation " << max_deviation << (oracle_bitwise ? " (bitwise)" : "")
      << (oracle_informative ? " [informative: stale_weights=current]" : (oracle_ok() ? " ok" : " FAIL")) << '\n';
  for (const auto& g : gradchecks) {
    out << "finite differences " << g.subject << ": max rel error " << g.max_rel_error()
        << (g.passed(options.fd_tolerance) ? " ok" : " FAIL") << '\n';
  }
  out << "dropout replay: " << replay_checked << " pairs, " << replay_mismatches << " mismatches"
      << (replay_mismatches == 0 ? " ok" : " FAIL") << '\n';
  if (k1_checked) out << "K=1 collapse: " << (k1_bitwise ? "bitwise ok" : "FAIL") << '\n';
  out << "tie V_i == V_o: " << (tie_ok ? "ok" : "FAIL") << '\n';
  out << (passed() ? "PASS" : "FAIL") << '\n';
}

VerifyReport verify_run(const RunConfig& config, const BatchSource& batches, std::int64_t steps,
                        const VerifyOptions& options) {
  if (steps < 1 || steps > 200) throw std::invalid_argument("verify: steps must lie in [1, 200]");
  config.validate(false);
  const Model initial = init_model(config.dims(), config.init_seed);
  EngineOptions eo = config.engine_options();
  PipelineEngine engine(initial, eo);
  const std::size_t K = engine.module_count();
  Optimizer optimizer(config.optimizer, K + 1);
  const LrSchedule schedule = config.lr_schedule();

  VerifyReport report;
  report.options = options;
  report.modules = K;
  report.steps = steps;
  report.oracle_informative = config.stale_weights == StaleWeights::current;

  const auto pairs = replay_pairs(K, steps, options.replay_pairs, config.init_seed);
  std::deque<std::pair<std::int64_t, Model>> history;
  std::map<std::int64_t, FullGradient> oracle;
  std::map<std::int64_t, BatchSample> batch_cache;
  const auto batch = [&](std::int64_t s) -> const BatchSample& {
    auto it = batch_cache.find(s);
    if (it == batch_cache.end()) it = batch_cache.emplace(s, batches(s)).first;
    return it->second;
  };

  for (std::int64_t t = 0; t < steps; ++t) {
    history.emplace_back(t, engine.model());
    while (history.front().first < t - static_cast<std::int64_t>(K)) history.pop_front();
    const auto model_at = [&](std::int64_t s) -> const Model& {
      for (const auto& [step, m] : history)
        if (step == s) return m;
      throw std::logic_error("verify: no weight record for step " + std::to_string(s));
    };
    const auto oracle_at = [&](std::int64_t s) -> const FullGradient& {
      auto it = oracle.find(s);
      if (it == oracle.end()) {
        it = oracle.emplace(s, full_backprop(model_at(s), batch(s), eo.dropout_seed, s, eo.train)).first;
      }
      return it->second;
    };

    // Forward first so that this step's slot exists, then compare the
    // recompute path against store-all on the pending slot.
    const BatchSample& bt = batch(t);
    double loss = 0.0;
    auto& modules = engine.modules();
    if (!pairs.empty()) {
      // Checked on copies so the engine's own state is untouched.
      std::vector<ModuleState> probe(modules.begin(), modules.end());
      Tensor h;
      for (std::size_t k = 0; k < K; ++k) {
        h = probe[k].forward(k == 0 ? nullptr : &h, bt, t, t, engine.vocab_matrix(), eo.dropout_seed, eo.train);
      }
      for (std::size_t k = 0; k < K; ++k) {
        if (!pairs.count({k, t})) continue;
        const ModuleState& m = probe[k];
        const StaleSlot& slot = m.slots().front();
        const WeightSnapshot& snap = m.snapshots().front();
        const Tensor one({1}, {1.0});
        const Tensor& grad_out = m.is_last() ? one : m.inbox().front().grad;
        const Tensor& vocab = m.touches_vocab() ? snap.vocab_matrix : engine.vocab_matrix();
        const ModuleBackward re = module_recompute_backward(m, slot, grad_out, snap.layers, vocab, eo.train, true);
        const ModuleBackward all = module_store_all_backward(m, slot, grad_out, snap.layers, vocab, eo.train);
        ++report.replay_checked;
        if (!same_backward(re, all)) ++report.replay_mismatches;
      }
    }

    const GradientPacket packet = engine.compute(t, bt, loss);
    engine.advance_clock(t, packet.samples);

    for (std::size_t k = 0; k < K; ++k) {
      const ModuleState& m = modules[k];
      OracleEntry e{t, k, 0.0, true};
      const std::int64_t s = t - m.delay();
      if (s < 0) {
        for (const auto& g : packet.modules[k]) {
          e.deviation = std::max(e.deviation, max_abs_diff(g, Tensor(g.shape())));
          e.bitwise = e.bitwise && all_zero(g);
        }
      } else {
        const FullGradient& full = oracle_at(s);
        ParamList expected;
        for (std::size_t l = 0; l < m.layers().size(); ++l)
          for (const auto& g : full.layers[m.first_layer() + l]) expected.push_back(g);
        e.deviation = max_deviation(packet.modules[k], expected, e.bitwise);
      }
      report.oracle.push_back(e);
    }
    {
      const std::int64_t stale = t - static_cast<std::int64_t>(K) + 1;
      const Tensor expected = embedding_gradient(t, K, oracle_at(t).output_projection,
                                                 stale >= 0 ? &oracle_at(stale).input_embedding : nullptr,
                                                 eo.tied_grad);
      OracleEntry e{t, K, max_abs_diff(packet.embedding, expected), bitwise_equal(packet.embedding, expected)};
      report.oracle.push_back(e);
    }
    // Step t+1 needs samples t+1-(K-1) and later.
    const std::int64_t keep_from = t + 2 - static_cast<std::int64_t>(K);
    oracle.erase(oracle.begin(), oracle.lower_bound(keep_from));
    batch_cache.erase(batch_cache.begin(), batch_cache.lower_bound(keep_from));

    engine.apply(packet, optimizer, lr_at(schedule, t));
    report.tie_ok = report.tie_ok && &engine.input_embedding() == &engine.output_projection() &&
                    bitwise_equal(engine.input_embedding(), engine.output_projection());
  }
  for (const auto& e : report.oracle) {
    report.max_deviation = std::max(report.max_deviation, e.deviation);
    report.oracle_bitwise = report.oracle_bitwise && e.bitwise;
  }

  if (options.k1_check) {
    report.k1_checked = true;
    EngineOptions one = eo;
    one.modules = 1;
    one.costs = {};
    PipelineEngine e1(initial, one);
    Model seq = initial;
    Optimizer o1(config.optimizer, 2);
    Optimizer os(config.optimizer, 2);
    for (std::int64_t t = 0; t < steps && report.k1_bitwise; ++t) {
      const BatchSample bt = batches(t);
      const double lr = lr_at(schedule, t);
      const StepRecord a = e1.step(t, bt, o1, lr);
      const SequentialStep b = sequential_step(t, bt, seq, os, lr, eo.tied_grad, eo.dropout_seed, eo.train);
      report.k1_bitwise = a.loss == b.loss && bitwise_equal(a.packet, b.packet);
    }
  }

  if (options.gradchecks) {
    const ModelDims small = gradcheck_dims();
    for (int i = 0; i < options.fd_instances; ++i) {
      const std::uint64_t seed = derive_seed(config.init_seed, static_cast<std::uint64_t>(i));
      for (LayerKind kind : {LayerKind::embedding, LayerKind::block, LayerKind::head}) {
        report.gradchecks.push_back(check_layer_gradients(kind, small, seed));
      }
      report.gradchecks.push_back(check_model_gradients(small, seed));
    }
  }
  return report;
}

}  // namespace ouro
