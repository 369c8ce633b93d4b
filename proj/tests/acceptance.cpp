// Prints one PASS/FAIL line per acceptance criterion, also written to
// acceptance_results.txt in the working directory, and exits nonzero if any
// criterion fails. Optional arguments select a subset, e.g. `acceptance 1 7`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "ouroboros/bench.hpp"
#include "ouroboros/concurrent.hpp"
#include "ouroboros/gradcheck.hpp"
#include "ouroboros/report.hpp"
#include "ouroboros/verify.hpp"
#include "support.hpp"

using namespace ouro;
using namespace ouro::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Set by every criterion that owns an engine; reported by criterion 6.
bool g_tie_ok = true;
std::size_t g_tie_checks = 0;

void check_tie(const PipelineEngine& engine) {
  ++g_tie_checks;
  g_tie_ok = g_tie_ok && &engine.input_embedding() == &engine.output_projection() &&
             bitwise_equal(engine.input_embedding(), engine.output_projection());
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

const std::filesystem::path& work_dir() {
  static const std::filesystem::path dir = scratch_dir("acceptance");
  return dir;
}

const std::filesystem::path& small_corpus() {
  static const std::filesystem::path p = [] {
    const auto path = work_dir() / "small.txt";
    write_file(path, english_like_corpus(200000, 11));
    return path;
  }();
  return p;
}

// Four blocks of width 16 on the English-like corpus.
RunConfig small_config() {
  RunConfig c;
  c.data = small_corpus().string();
  c.vocab_mode = VocabMode::char_filtered;
  c.layers = 4;
  c.dim = 16;
  c.ffn_dim = 32;
  c.seq_len = 16;
  c.batch = 2;
  c.dropout = 0.1;
  c.lr = 5e-3;
  c.warmup = 10;
  c.steps = 200;
  c.write_trace = false;
  return c;
}

BatchSource source(const BatchStream& data) {
  return [&data](std::int64_t t) { return data.batch_at(t); };
}

Outcome oracle_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  bool bitwise = true, tie = true;
  std::size_t gradients = 0;
  for (std::size_t k = 2; k <= 5; ++k)
    for (OptimizerKind o : {OptimizerKind::adam, OptimizerKind::sgd}) {
      RunConfig c = small_config();
      c.k = k;
      c.optimizer = o;
      c.lr = o == OptimizerKind::sgd ? 0.05 : 5e-3;
      c.steps = 50;
      const BatchStream data = stream_for(c);
      VerifyOptions vo;
      vo.gradchecks = false;
      vo.k1_check = false;
      vo.replay_pairs = 0;
      const VerifyReport r = verify_run(c, source(data), 50, vo);
      worst = std::max(worst, r.max_deviation);
      bitwise = bitwise && r.oracle_bitwise;
      tie = tie && r.tie_ok;
      gradients += r.oracle.size();
    }
  g_tie_ok = g_tie_ok && tie;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst < 1e-10 && bitwise && secs < 60.0,
          std::to_string(gradients) + " gradients, max abs dev " + fmt("%.3g", worst) +
              (bitwise ? ", bitwise" : ", not bitwise") + ", " + fmt("%.1f", secs) + " s"};
}

Outcome k1_collapse() {
  RunConfig c = small_config();
  c.k = 1;
  c.steps = 500;
  c.warmup = 50;
  const BatchStream data = stream_for(c);
  c.mode = RunMode::sequential;
  const auto seq = train_rows(c, data, 500);
  c.mode = RunMode::ouroboros_ref;
  const auto ouro = train_rows(c, data, 500);
  std::size_t equal = 0;
  for (std::size_t t = 0; t < std::min(seq.size(), ouro.size()); ++t)
    equal += std::memcmp(&seq[t].loss, &ouro[t].loss, sizeof(double)) == 0;
  return {seq.size() == 500 && ouro.size() == 500 && equal == 500,
          std::to_string(equal) + "/500 losses bitwise equal"};
}

Outcome gradient_checks() {
  double worst = 0.0;
  std::size_t count = 0;
  const ModelDims dims = gradcheck_dims();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (LayerKind kind : {LayerKind::embedding, LayerKind::block, LayerKind::head}) {
      worst = std::max(worst, check_layer_gradients(kind, dims, 1000 + seed).max_rel_error());
      ++count;
    }
    worst = std::max(worst, check_model_gradients(dims, 2000 + seed).max_rel_error());
    ++count;
  }
  return {worst < 1e-6, std::to_string(count) + " instances (dim " + std::to_string(dims.dim) + ", ffn " +
                            std::to_string(dims.ffn_dim) + "), max rel err " + fmt("%.3g", worst)};
}

Outcome zero_padding() {
  RunConfig c = small_config();
  const BatchStream data = stream_for(c);
  std::size_t checked = 0, wrong = 0;
  for (std::size_t K = 1; K <= 5; ++K) {
    c.k = K;
    PipelineEngine engine(init_model(c.dims(), c.init_seed), c.engine_options());
    Optimizer opt(OptimizerKind::adam, K + 1);
    for (std::int64_t t = 0; t < static_cast<std::int64_t>(K) + 3; ++t) {
      const StepRecord r = engine.step(t, data.batch_at(t), opt, 1e-3);
      check_tie(engine);
      for (std::size_t k = 0; k < K; ++k) {
        // 1-based module index k+1: zero iff t < K - (k+1).
        const bool should_be_zero = t < static_cast<std::int64_t>(K - (k + 1));
        bool is_zero = true;
        for (const auto& g : r.packet.modules[k]) is_zero = is_zero && all_zero(g);
        wrong += is_zero != should_be_zero;
        ++checked;
      }
      wrong += all_zero(r.packet.embedding) != (t < static_cast<std::int64_t>(K) - 1);
      ++checked;
    }
  }
  return {wrong == 0, std::to_string(checked) + " gradients over K=1..5, " + std::to_string(wrong) + " wrong"};
}

Outcome dropout_replay() {
  RunConfig c = small_config();
  c.k = 4;
  c.dropout = 0.3;
  const BatchStream data = stream_for(c);
  VerifyOptions vo;
  vo.gradchecks = false;
  vo.k1_check = false;
  vo.replay_pairs = 100;
  const VerifyReport r = verify_run(c, source(data), 60, vo);
  g_tie_ok = g_tie_ok && r.tie_ok;
  return {r.replay_checked >= 100 && r.replay_mismatches == 0,
          std::to_string(r.replay_checked) + " (module, step) pairs, " + std::to_string(r.replay_mismatches) +
              " mismatches"};
}

Outcome tie_invariant() {
  RunConfig c = small_config();
  const BatchStream data = stream_for(c);
  for (std::size_t K = 1; K <= 5; ++K) {
    c.k = K;
    PipelineEngine ref(init_model(c.dims(), c.init_seed), c.engine_options());
    Optimizer a(c.optimizer, K + 1);
    run_reference(ref, source(data), a, c.lr_schedule(), 0, 40, [&](const StepRecord&) { check_tie(ref); });
    if (K < 2) continue;
    PipelineEngine con(init_model(c.dims(), c.init_seed), c.engine_options());
    Optimizer b(c.optimizer, K + 1);
    run_concurrent(con, source(data), b, c.lr_schedule(), 0, 40, [&](const StepRecord&) { check_tie(con); });
  }
  return {g_tie_ok, std::to_string(g_tie_checks) + " engine steps checked (K=1..5, both executors, plus other criteria)"};
}

Outcome concurrent_equals_reference() {
  std::size_t equal = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig c = small_config();
    c.k = 3;
    c.reseed(seed);
    const BatchStream data = stream_for(c);
    PipelineEngine ref(init_model(c.dims(), c.init_seed), c.engine_options());
    PipelineEngine con(init_model(c.dims(), c.init_seed), c.engine_options());
    Optimizer a(c.optimizer, 4), b(c.optimizer, 4);
    std::vector<GradientPacket> pa, pb;
    run_reference(ref, source(data), a, c.lr_schedule(), 0, 200, [&](const StepRecord& r) {
      check_tie(ref);
      pa.push_back(r.packet);
    });
    run_concurrent(con, source(data), b, c.lr_schedule(), 0, 200, [&](const StepRecord& r) {
      check_tie(con);
      pb.push_back(r.packet);
    });
    for (std::size_t t = 0; t < std::min(pa.size(), pb.size()); ++t) equal += bitwise_equal(pa[t], pb[t]);
    total += 200;
  }
  return {equal == total, std::to_string(equal) + "/" + std::to_string(total) + " packets bitwise equal (K=3, 5 seeds)"};
}

// 1 MB English-like corpus, default dim-64 / 8-block model, 5000 steps.
// Final loss is the mean of the last 250 logged losses.
Outcome convergence_parity() {
  const auto corpus = work_dir() / "corpus_1mb.txt";
  write_file(corpus, english_like_corpus(1000000, 2024));
  double seq_sum = 0.0, ouro_sum = 0.0;
  std::ostringstream detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    RunConfig c;
    c.data = corpus.string();
    c.vocab_mode = VocabMode::char_filtered;
    c.seq_len = 16;
    c.batch = 1;
    c.k = 3;
    c.optimizer = OptimizerKind::adam;
    c.lr = 1e-3;
    c.warmup = 500;
    c.steps = 5000;
    c.write_trace = false;
    c.reseed(seed);
    const BatchStream data = stream_for(c);
    c.mode = RunMode::sequential;
    const double seq = mean_loss(train_rows(c, data, c.steps), 250);
    c.mode = RunMode::ouroboros_concurrent;
    const double ouro = mean_loss(train_rows(c, data, c.steps), 250);
    seq_sum += seq;
    ouro_sum += ouro;
    detail << "seed " << seed << " " << fmt("%.4f", seq) << "/" << fmt("%.4f", ouro) << "; ";
  }
  const double rel = std::fabs(ouro_sum - seq_sum) / seq_sum;
  detail << "mean sequential " << fmt("%.4f", seq_sum / 3) << ", ouroboros " << fmt("%.4f", ouro_sum / 3)
         << ", rel diff " << fmt("%.2f%%", 100 * rel);
  return {rel < 0.05, detail.str()};
}

Outcome warmup_ablation() {
  const auto corpus = work_dir() / "copy.txt";
  write_file(corpus, copy_corpus());
  int worse = 0;
  std::ostringstream detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    double loss[2];
    for (int i = 0; i < 2; ++i) {
      RunConfig c = copy_task_config(corpus);
      c.k = 4;
      c.lr = 3e-2;
      c.warmup = i == 0 ? 0 : 500;
      c.reseed(seed);
      const BatchStream data = stream_for(c);
      try {
        loss[i] = train_rows(c, data, 1001).back().loss;
      } catch (const DivergenceError&) {
        loss[i] = INFINITY;
      }
    }
    worse += loss[0] > loss[1];
    detail << "seed " << seed << " W=0 " << fmt("%.4g", loss[0]) << " vs W=500 " << fmt("%.4g", loss[1]) << "; ";
  }
  detail << worse << "/3 seeds worse without warm-up";
  return {worse >= 2, detail.str()};
}

Outcome pipeline_utilization() {
  RunConfig c = small_config();
  const BatchStream data = stream_for(c);
  BenchOptions o;
  o.steps = 20;
  o.synthetic = SyntheticCosts{0.5, 1.0, 0.1};
  const std::vector<std::size_t> ks{3};
  const BenchRow r = bench(c, source(data), ks, o).front();
  const double c_single = o.synthetic->backward;
  bool full = true;
  for (double u : r.utilization) full = full && u == 1.0;
  return {r.ouroboros_backward_time <= 1.25 * c_single && r.steady_idle_slots == 0 && full,
          "backward/step " + fmt("%.3f", r.ouroboros_backward_time) + " vs single-module " + fmt("%.3f", c_single) +
              " (sequential " + fmt("%.3f", r.sequential_backward_time) + "), idle slots " +
              std::to_string(r.steady_idle_slots)};
}

// SGD on a tiny model for 10^4 steps, fixed and diminishing step sizes.
Outcome theorem_trends() {
  RunConfig c = small_config();
  c.layers = 1;
  c.dim = 8;
  c.ffn_dim = 16;
  c.seq_len = 8;
  c.batch = 2;
  c.k = 3;
  c.optimizer = OptimizerKind::sgd;
  c.steps = 10000;
  c.warmup = 0;
  const BatchStream data = stream_for(c);
  c.schedule = ScheduleMode::fixed;
  c.lr = 0.05;
  const auto fixed = gradient_norm_report(train_rows(c, data, c.steps));
  c.schedule = ScheduleMode::diminishing;
  c.lr = 1.0;
  const auto dim = gradient_norm_report(train_rows(c, data, c.steps));
  const bool pass = fixed.plateaued && fixed.above_zero && dim.weighted_final < dim.weighted_at_tenth;
  return {pass, "fixed: A(T) " + fmt("%.4g", fixed.running_average.back()) + ", |A(T)-A(3T/4)|/A(T) " +
                    fmt("%.3f", fixed.plateau_change) + "; diminishing: W(1e3) " + fmt("%.4g", dim.weighted_at_tenth) +
                    " > W(1e4) " + fmt("%.4g", dim.weighted_final)};
}

Outcome checkpoint_determinism() {
  std::size_t resumes = 0, identical = 0;
  for (RunMode mode : {RunMode::sequential, RunMode::ouroboros_ref, RunMode::ouroboros_concurrent}) {
    RunConfig c = small_config();
    c.mode = mode;
    c.k = 4;
    c.steps = 16;
    c.warmup = 4;
    const BatchStream data = stream_for(c);
    const auto whole = train_rows(c, data, c.steps);
    for (std::int64_t cut = 1; cut < c.steps; ++cut) {
      std::vector<MetricsRow> rows;
      const RowObserver keep = [&](const MetricsRow& r) { rows.push_back(r); };
      const auto dir = work_dir() / "resume";
      {
        TrainingRun first(c);
        first.run(source(data), cut, keep);
        save_run(first, dir);
      }
      TrainingRun resumed = resume_run(dir);
      resumed.run(source(data), c.steps, keep);
      ++resumes;
      identical += same_trajectory(whole, rows);
    }
  }
  return {identical == resumes, std::to_string(identical) + "/" + std::to_string(resumes) +
                                    " interrupted runs reproduce the log bitwise (3 modes, every step)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"oracle equivalence", oracle_equivalence},
      {"K=1 collapse", k1_collapse},
      {"gradient checks", gradient_checks},
      {"zero padding", zero_padding},
      {"dropout replay and recompute", dropout_replay},
      {"tie invariant", tie_invariant},
      {"concurrent equals reference", concurrent_equals_reference},
      {"convergence parity", convergence_parity},
      {"warm-up ablation", warmup_ablation},
      {"pipeline utilization", pipeline_utilization},
      {"gradient-norm trends", theorem_trends},
      {"checkpoint determinism", checkpoint_determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  std::ofstream results("acceptance_results.txt");
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char line[1024];
    std::snprintf(line, sizeof(line), "%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id,
                  criteria[i].first, o.detail.c_str(), secs);
    std::fputs(line, stdout);
    std::fflush(stdout);
    results << line << std::flush;
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
