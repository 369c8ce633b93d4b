#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ouroboros/bench.hpp"
#include "ouroboros/checkpoint.hpp"
#include "ouroboros/report.hpp"
#include "ouroboros/verify.hpp"
#include "support.hpp"

using namespace ouro;
using namespace ouro::testing;

namespace ouro {
void PrintTo(RunMode mode, std::ostream* out) { *out << to_string(mode); }
}  // namespace ouro

namespace {

// Small model on an English-like corpus, char-filtered vocabulary.
RunConfig tiny_config(const std::filesystem::path& dir) {
  const auto corpus = dir / "corpus.txt";
  if (!std::filesystem::exists(corpus)) write_file(corpus, english_like_corpus(20000, 5));
  RunConfig c;
  c.data = corpus.string();
  c.vocab_mode = VocabMode::char_filtered;
  c.layers = 3;
  c.dim = 8;
  c.ffn_dim = 12;
  c.seq_len = 6;
  c.batch = 2;
  c.dropout = 0.1;
  c.k = 3;
  c.lr = 5e-3;
  c.warmup = 4;
  c.steps = 40;
  c.write_trace = false;
  return c;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Config, DefaultsAreDeskScale) {
  const RunConfig c;
  EXPECT_EQ(c.layers, 8u);
  EXPECT_EQ(c.dim, 64u);
  EXPECT_EQ(c.seq_len, 64u);
  EXPECT_EQ(c.batch, 16u);
  EXPECT_EQ(c.vocab_mode, VocabMode::byte);
  EXPECT_EQ(c.stale_weights, StaleWeights::snapshot);
  EXPECT_EQ(c.tied_grad, TiedGrad::half_avg);
  EXPECT_EQ(c.dims().layer_count(), 10u);
}

TEST(Config, ParsesCommentsAndOverrides) {
  std::istringstream in("# desk run\nk = 5\nmode = ouroboros-concurrent  # trailing\n\noptimizer=sgd\n"
                        "schedule = diminishing\nvocab_mode = char-filtered\nstale_weights = current\n");
  const RunConfig c = parse_config(in);
  EXPECT_EQ(c.k, 5u);
  EXPECT_EQ(c.mode, RunMode::ouroboros_concurrent);
  EXPECT_EQ(c.optimizer, OptimizerKind::sgd);
  EXPECT_EQ(c.schedule, ScheduleMode::diminishing);
  EXPECT_EQ(c.vocab_mode, VocabMode::char_filtered);
  EXPECT_EQ(c.stale_weights, StaleWeights::current);
}

TEST(Config, TextAndJsonRoundTrip) {
  RunConfig c;
  c.data = "/tmp/x y.txt";
  c.k = 6;
  c.lr = 0.1 + 0.2;
  c.dropout = 1.0 / 3.0;
  c.mode = RunMode::sequential;
  c.tied_grad = TiedGrad::sum;
  c.reseed(77);
  std::ostringstream text;
  write_config(text, c);
  std::istringstream in(text.str());
  const RunConfig a = parse_config(in);
  const RunConfig b = config_from_json(config_to_json(c));
  for (const RunConfig* r : {&a, &b}) {
    EXPECT_EQ(r->data, c.data);
    EXPECT_EQ(r->k, c.k);
    EXPECT_EQ(r->lr, c.lr);
    EXPECT_EQ(r->dropout, c.dropout);
    EXPECT_EQ(r->mode, c.mode);
    EXPECT_EQ(r->tied_grad, c.tied_grad);
    EXPECT_EQ(r->dropout_seed, c.dropout_seed);
  }
}

TEST(Config, RejectsBadInput) {
  RunConfig c;
  EXPECT_THROW(set_field(c, "nope", "1"), ConfigError);
  EXPECT_THROW(set_field(c, "k", "three"), ConfigError);
  EXPECT_THROW(set_field(c, "mode", "async"), ConfigError);
  std::istringstream missing_eq("k 3\n");
  EXPECT_THROW(parse_config(missing_eq), ConfigError);
  c.k = 11;
  EXPECT_THROW(c.validate(false), ConfigError);
  c.k = 3;
  c.seq_len = 1;
  EXPECT_THROW(c.validate(false), ConfigError);
  c.seq_len = 8;
  c.data = "/nonexistent/corpus.txt";
  EXPECT_THROW(c.validate(true), ConfigError);
  EXPECT_NO_THROW(c.validate(false));
}

TEST(Data, ShiftByOneTargets) {
  const auto dir = scratch_dir("shift");
  write_file(dir / "abcab.txt", "abcab");
  const BatchStream s = ingest(dir / "abcab.txt", VocabMode::byte, 2, 1, 0, 256);
  ASSERT_EQ(s.window_count(), 2u);
  bool saw_first = false;
  for (std::int64_t t = 0; t < 2; ++t) {
    const BatchSample b = s.batch_at(t);
    if (b.tokens == std::vector<int>{'a', 'b'}) {
      EXPECT_EQ(b.targets, (std::vector<int>{'b', 'c'}));
      saw_first = true;
    } else {
      EXPECT_EQ(b.tokens, (std::vector<int>{'c', 'a'}));
      EXPECT_EQ(b.targets, (std::vector<int>{'a', 'b'}));
    }
  }
  EXPECT_TRUE(saw_first);
}

TEST(Data, VocabularyModes) {
  EXPECT_EQ(vocab_size(VocabMode::byte), 256u);
  EXPECT_EQ(vocab_size(VocabMode::char_filtered), 27u);
  EXPECT_EQ(encode_text("Ab, z!\n\t q", VocabMode::char_filtered), (std::vector<int>{1, 2, 0, 26, 0, 17}));
  EXPECT_EQ(encode_text("\xff", VocabMode::byte), (std::vector<int>{255}));
}

TEST(Data, SameSeedSameOrder) {
  const auto dir = scratch_dir("order");
  write_file(dir / "c.txt", english_like_corpus(5000, 1));
  const BatchStream a = ingest(dir / "c.txt", VocabMode::byte, 8, 3, 42, 256);
  const BatchStream b = ingest(dir / "c.txt", VocabMode::byte, 8, 3, 42, 256);
  const BatchStream other = ingest(dir / "c.txt", VocabMode::byte, 8, 3, 43, 256);
  bool differs = false;
  for (std::int64_t t = 0; t < 500; t += 7) {
    EXPECT_EQ(a.batch_at(t).tokens, b.batch_at(t).tokens);
    differs = differs || a.batch_at(t).tokens != other.batch_at(t).tokens;
  }
  EXPECT_TRUE(differs);
}

TEST(Data, EpochVisitsEveryWindowOnce) {
  // Bytes 0..240 in order: each window is identified by its first byte.
  const auto dir = scratch_dir("epoch");
  std::string text;
  for (int i = 0; i <= 240; ++i) text += static_cast<char>(i);
  write_file(dir / "ramp.bin", text);
  const BatchStream s = ingest(dir / "ramp.bin", VocabMode::byte, 8, 5, 9, 256);
  ASSERT_EQ(s.window_count(), 30u);
  for (std::int64_t epoch = 0; epoch < 2; ++epoch) {
    std::vector<int> seen(30, 0);
    for (std::int64_t t = epoch * 6; t < epoch * 6 + 6; ++t) {
      const BatchSample b = s.batch_at(t);
      for (std::size_t j = 0; j < 5; ++j) ++seen[static_cast<std::size_t>(b.tokens[j * 8]) / 8];
    }
    for (int n : seen) EXPECT_EQ(n, 1);
  }
  EXPECT_NE(s.batch_at(0).tokens, s.batch_at(6).tokens);
}

TEST(Data, IngestErrors) {
  const auto dir = scratch_dir("ingest");
  write_file(dir / "empty.txt", "");
  write_file(dir / "short.txt", "abc");
  write_file(dir / "ok.txt", "hello world, hello world");
  EXPECT_THROW(ingest(dir / "empty.txt", VocabMode::byte, 2, 1, 0, 256), DataError);
  EXPECT_THROW(ingest(dir / "missing.txt", VocabMode::byte, 2, 1, 0, 256), DataError);
  EXPECT_THROW(ingest(dir / "short.txt", VocabMode::byte, 8, 1, 0, 256), DataError);
  EXPECT_THROW(ingest(dir / "ok.txt", VocabMode::byte, 4, 1, 0, 27), DataError);
  EXPECT_NO_THROW(ingest(dir / "ok.txt", VocabMode::char_filtered, 4, 1, 0, 27));
}

TEST(Metrics, RoundTripIsExact) {
  std::vector<MetricsRow> rows{{0, 1.25, 3.0, 1.0 / 3.0, 2e-300, 2.5e-4}, {1, 0.5, 6.0, std::log(2.0), 17.0, 1e-3}};
  std::stringstream io;
  write_metrics(io, rows);
  EXPECT_EQ(io.str().substr(0, io.str().find('\n')), kMetricsHeader);
  const auto back = read_metrics(io);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(same_trajectory(rows, back));
  EXPECT_EQ(back[0].wall_ms, 1.25);
}

TEST(Metrics, RejectsBadLogs) {
  std::istringstream bad_header("step,loss\n0,1\n");
  EXPECT_THROW(read_metrics(bad_header), std::runtime_error);
  std::istringstream repeated(std::string(kMetricsHeader) + "\n1,0,0,0,0,0\n1,0,0,0,0,0\n");
  EXPECT_THROW(read_metrics(repeated), std::runtime_error);
  std::istringstream garbage(std::string(kMetricsHeader) + "\n1,x,0,0,0,0\n");
  EXPECT_THROW(read_metrics(garbage), std::runtime_error);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  const auto dir = scratch_dir("ckpt");
  Checkpoint c;
  c.tensors["w"] = Tensor({2, 3}, {1, -2, 3.5, 1e-300, -0.0, 6});
  c.tensors["absent"] = Tensor();
  c.reals["pi"] = 3.141592653589793;
  c.integers["big"] = 0xFFFFFFFFFFFFFFFFULL;
  save_checkpoint(c, dir / "c.bin");
  const Checkpoint back = load_checkpoint(dir / "c.bin");
  EXPECT_TRUE(bitwise_equal(back.tensor("w"), c.tensors["w"]));
  EXPECT_TRUE(back.tensor("absent").empty());
  EXPECT_EQ(back.real("pi"), c.reals["pi"]);
  EXPECT_EQ(back.integer("big"), c.integers["big"]);
  EXPECT_THROW(back.tensor("missing"), CheckpointError);

  const std::string bytes = read_file(dir / "c.bin");
  write_file(dir / "trunc.bin", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_checkpoint(dir / "trunc.bin"), CheckpointError);
  write_file(dir / "magic.bin", "XXXX" + bytes.substr(4));
  EXPECT_THROW(load_checkpoint(dir / "magic.bin"), CheckpointError);
  write_file(dir / "extra.bin", bytes + "!");
  EXPECT_THROW(load_checkpoint(dir / "extra.bin"), CheckpointError);
}

TEST(Train, SingleModuleMatchesSequentialLosses) {
  const auto dir = scratch_dir("k1");
  RunConfig c = tiny_config(dir);
  c.k = 1;
  const BatchStream data = stream_for(c);
  c.mode = RunMode::sequential;
  const auto seq = train_rows(c, data, 30);
  c.mode = RunMode::ouroboros_ref;
  const auto ouro = train_rows(c, data, 30);
  ASSERT_EQ(seq.size(), 30u);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    EXPECT_EQ(seq[t].loss, ouro[t].loss) << t;
    EXPECT_EQ(seq[t].grad_sq_norm, ouro[t].grad_sq_norm) << t;
  }
}

TEST(Train, ConcurrentMatchesReferenceLog) {
  const auto dir = scratch_dir("conc");
  RunConfig c = tiny_config(dir);
  const BatchStream data = stream_for(c);
  c.mode = RunMode::ouroboros_ref;
  const auto ref = train_rows(c, data, 25);
  c.mode = RunMode::ouroboros_concurrent;
  EXPECT_TRUE(same_trajectory(ref, train_rows(c, data, 25)));
}

TEST(Train, DivergenceIsReported) {
  const auto dir = scratch_dir("diverge");
  RunConfig c = tiny_config(dir);
  c.optimizer = OptimizerKind::sgd;
  c.schedule = ScheduleMode::fixed;
  c.lr = 1e200;
  const BatchStream data = stream_for(c);
  for (RunMode m : {RunMode::sequential, RunMode::ouroboros_ref, RunMode::ouroboros_concurrent}) {
    c.mode = m;
    EXPECT_THROW(train_rows(c, data, 30), DivergenceError) << to_string(m);
  }
}

class ResumeTest : public ::testing::TestWithParam<RunMode> {};

TEST_P(ResumeTest, InterruptAnywhereReproducesLog) {
  const auto dir = scratch_dir(std::string("resume_") + to_string(GetParam()));
  RunConfig c = tiny_config(dir);
  c.mode = GetParam();
  c.k = 4;
  c.steps = 14;
  const BatchStream data = stream_for(c);
  const BatchSource source = [&](std::int64_t t) { return data.batch_at(t); };
  const auto whole = train_rows(c, data, c.steps);
  ASSERT_EQ(whole.size(), 14u);
  for (std::int64_t cut : {1, 2, 3, 7, 13}) {
    std::vector<MetricsRow> rows;
    const RowObserver keep = [&](const MetricsRow& r) { rows.push_back(r); };
    {
      TrainingRun first(c);
      first.run(source, cut, keep);
      save_run(first, dir / "ckpt");
    }
    TrainingRun resumed = resume_run(dir / "ckpt");
    EXPECT_EQ(resumed.next_step(), cut);
    resumed.run(source, c.steps, keep);
    EXPECT_TRUE(same_trajectory(whole, rows)) << "cut at " << cut;
  }
}

INSTANTIATE_TEST_SUITE_P(AllModes, ResumeTest,
                         ::testing::Values(RunMode::sequential, RunMode::ouroboros_ref,
                                           RunMode::ouroboros_concurrent),
                         [](const auto& info) {
                           std::string n = to_string(info.param);
                           for (auto& ch : n)
                             if (ch == '-') ch = '_';
                           return n;
                         });

TEST(Train, ResumeRejectsMismatchedState) {
  const auto dir = scratch_dir("mismatch");
  RunConfig c = tiny_config(dir);
  const BatchStream data = stream_for(c);
  TrainingRun run(c);
  run.run([&](std::int64_t t) { return data.batch_at(t); }, 3);
  const Checkpoint state = run.save_state();
  c.k = 2;
  TrainingRun other(c);
  EXPECT_THROW(other.load_state(state), CheckpointError);
}

struct VerifyCase {
  std::size_t k;
  OptimizerKind optimizer;
  ScheduleMode schedule;
};

void PrintTo(const VerifyCase& c, std::ostream* out) {
  *out << "K=" << c.k << " " << to_string(c.optimizer) << " " << to_string(c.schedule);
}

class VerifyMatrix : public ::testing::TestWithParam<VerifyCase> {};

TEST_P(VerifyMatrix, OracleAgreesBitwise) {
  const auto dir = scratch_dir("verify");
  RunConfig c = tiny_config(dir);
  c.k = GetParam().k;
  c.optimizer = GetParam().optimizer;
  c.schedule = GetParam().schedule;
  c.lr = c.optimizer == OptimizerKind::sgd ? 0.05 : 5e-3;
  const BatchStream data = stream_for(c);
  VerifyOptions o;
  o.gradchecks = false;
  o.replay_pairs = 20;
  const VerifyReport r = verify_run(c, [&](std::int64_t t) { return data.batch_at(t); }, 12, o);
  EXPECT_TRUE(r.passed());
  EXPECT_LT(r.max_deviation, 1e-10);
  EXPECT_TRUE(r.oracle_bitwise);
  EXPECT_TRUE(r.tie_ok);
  EXPECT_EQ(r.replay_mismatches, 0u);
  EXPECT_TRUE(r.k1_bitwise);
}

std::vector<VerifyCase> verify_cases() {
  std::vector<VerifyCase> cases;
  for (std::size_t k = 1; k <= 5; ++k)
    for (OptimizerKind o : {OptimizerKind::sgd, OptimizerKind::adam})
      for (ScheduleMode s : {ScheduleMode::fixed, ScheduleMode::warmup_cosine}) cases.push_back({k, o, s});
  return cases;
}

INSTANTIATE_TEST_SUITE_P(KOptimizerSchedule, VerifyMatrix, ::testing::ValuesIn(verify_cases()),
                         [](const auto& info) {
                           return "k" + std::to_string(info.param.k) + "_" + to_string(info.param.optimizer) +
                                  "_" + (info.param.schedule == ScheduleMode::fixed ? "fixed" : "cosine");
                         });

TEST(Verify, CurrentWeightsModeIsInformative) {
  const auto dir = scratch_dir("verify_current");
  RunConfig c = tiny_config(dir);
  c.stale_weights = StaleWeights::current;
  const BatchStream data = stream_for(c);
  VerifyOptions o;
  o.gradchecks = false;
  const VerifyReport r = verify_run(c, [&](std::int64_t t) { return data.batch_at(t); }, 10, o);
  EXPECT_TRUE(r.oracle_informative);
  EXPECT_GT(r.max_deviation, 0.0);
  EXPECT_TRUE(r.passed());
}

TEST(Verify, FiniteDifferenceChecksRun) {
  const auto dir = scratch_dir("verify_fd");
  RunConfig c = tiny_config(dir);
  const BatchStream data = stream_for(c);
  const VerifyReport r = verify_run(c, [&](std::int64_t t) { return data.batch_at(t); }, 6);
  EXPECT_FALSE(r.gradchecks.empty());
  EXPECT_TRUE(r.gradchecks_ok());
  EXPECT_TRUE(r.passed());
  std::ostringstream out;
  r.write(out);
  EXPECT_NE(out.str().find("PASS"), std::string::npos);
}

TEST(Verify, StepLimit) {
  const auto dir = scratch_dir("verify_limit");
  RunConfig c = tiny_config(dir);
  const BatchStream data = stream_for(c);
  EXPECT_THROW(verify_run(c, [&](std::int64_t t) { return data.batch_at(t); }, 201), std::invalid_argument);
}

TEST(Bench, SyntheticEqualCosts) {
  const auto dir = scratch_dir("bench");
  RunConfig c = tiny_config(dir);
  const BatchStream data = stream_for(c);
  BenchOptions o;
  o.steps = 12;
  o.synthetic = SyntheticCosts{0.5, 1.0, 0.1};
  const std::vector<std::size_t> ks{1, 3};
  const auto rows = bench(c, [&](std::int64_t t) { return data.batch_at(t); }, ks, o);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0].backward_speedup(), 1.0);
  EXPECT_DOUBLE_EQ(rows[0].step_speedup(), 1.0);
  // K = 3: backward 1.0 + relay 0.1 against 3 x 1.0 + 2 x 0.1.
  EXPECT_NEAR(rows[1].ouroboros_backward_time, 1.1, 1e-12);
  EXPECT_NEAR(rows[1].sequential_backward_time, 3.2, 1e-12);
  EXPECT_GE(rows[1].backward_speedup(), 2.4);
  EXPECT_EQ(rows[1].steady_idle_slots, 0u);
  for (double u : rows[1].utilization) EXPECT_DOUBLE_EQ(u, 1.0);
  std::ostringstream table;
  write_bench_table(table, rows);
  EXPECT_NE(table.str().find("bwd_x"), std::string::npos);
  const std::vector<std::size_t> too_many{6};
  EXPECT_THROW(bench(c, [&](std::int64_t t) { return data.batch_at(t); }, too_many, o), ConfigError);
}

namespace {

// Noisy gradient descent on f(w) = 1/2 sum a_i w_i^2: g = a * w + sigma * xi
// with unit-variance xi. Logs ||g||^2 per step.
std::vector<MetricsRow> quadratic_run(std::int64_t steps, const LrSchedule& schedule, double sigma,
                                      std::uint64_t seed) {
  const std::vector<double> a{1.0, 0.5, 2.0, 0.25, 1.5, 0.75, 1.25, 0.6};
  std::vector<double> w(a.size(), 3.0);
  SeededRng rng(seed);
  std::vector<MetricsRow> rows;
  for (std::int64_t t = 0; t < steps; ++t) {
    const double lr = lr_at(schedule, t);
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double g = a[i] * w[i] + sigma * std::sqrt(3.0) * (2.0 * rng.next_uniform() - 1.0);
      sq += g * g;
      w[i] -= lr * g;
    }
    rows.push_back({t, 0.0, 0.0, 0.0, sq, lr});
  }
  return rows;
}

// E||g_t||^2 from the exact second-moment recursion
// E w_{t+1}^2 = (1 - lr a)^2 E w_t^2 + lr^2 sigma^2.
std::vector<double> quadratic_expected_running_average(std::int64_t steps, double lr, double sigma) {
  const std::vector<double> a{1.0, 0.5, 2.0, 0.25, 1.5, 0.75, 1.25, 0.6};
  std::vector<double> m(a.size(), 9.0);
  std::vector<double> avg;
  double sum = 0.0;
  for (std::int64_t t = 0; t < steps; ++t) {
    double e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      e += a[i] * a[i] * m[i] + sigma * sigma;
      m[i] = (1.0 - lr * a[i]) * (1.0 - lr * a[i]) * m[i] + lr * lr * sigma * sigma;
    }
    sum += e;
    avg.push_back(sum / static_cast<double>(t + 1));
  }
  return avg;
}

}  // namespace

TEST(Report, FixedStepQuadraticPlateausAboveZero) {
  const LrSchedule fixed{0.1, 0, 1, ScheduleMode::fixed};
  const auto rows = quadratic_run(10000, fixed, 0.5, 3);
  const auto s = gradient_norm_report(rows);
  const auto expected = quadratic_expected_running_average(10000, 0.1, 0.5);
  for (std::size_t T : {100u, 1000u, 10000u})
    EXPECT_NEAR(s.running_average[T - 1] / expected[T - 1], 1.0, 0.05) << T;
  EXPECT_GT(s.running_average[9], s.running_average.back());
  EXPECT_TRUE(s.plateaued);
  EXPECT_TRUE(s.above_zero);
  EXPECT_GT(s.running_average.back(), 8 * 0.25 * 0.9);
}

TEST(Report, DiminishingStepWeightedAverageDecreases) {
  const LrSchedule dim{0.5, 0, 1, ScheduleMode::diminishing};
  const auto s = gradient_norm_report(quadratic_run(10000, dim, 0.5, 4));
  EXPECT_EQ(s.steps, 10000u);
  EXPECT_EQ(s.weighted_at_tenth, s.weighted_average[999]);
  EXPECT_LT(s.weighted_final, s.weighted_at_tenth);
  EXPECT_TRUE(s.weighted_decreasing);
}

TEST(Report, AllZeroGradients) {
  std::vector<MetricsRow> rows;
  for (std::int64_t t = 0; t < 50; ++t) rows.push_back({t, 0, 0, 0, 0.0, 0.1});
  const auto s = gradient_norm_report(rows);
  EXPECT_EQ(s.running_average.back(), 0.0);
  EXPECT_EQ(s.weighted_final, 0.0);
  EXPECT_EQ(s.plateau_change, 0.0);
  EXPECT_FALSE(s.above_zero);
  std::ostringstream out;
  write_summary(out, s);
  EXPECT_NE(out.str().find("proxy"), std::string::npos);
}

TEST(CopyTask, ConvergesBelowTenthOfANat) {
  const auto dir = scratch_dir("copy");
  write_file(dir / "copy.txt", copy_corpus());
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RunConfig c = copy_task_config(dir / "copy.txt");
    c.reseed(seed);
    const BatchStream data = stream_for(c);
    const auto rows = train_rows(c, data, c.steps);
    EXPECT_LT(rows.back().loss, 0.1) << "seed " << seed;
  }
}

#ifdef OURO_CLI
namespace {
int run_cli(const std::string& args) { return std::system((std::string(OURO_CLI) + " " + args + " > /dev/null 2>&1").c_str()); }
}  // namespace

TEST(Cli, TrainWritesLogTraceAndCheckpoint) {
  const auto dir = scratch_dir("cli");
  RunConfig c = tiny_config(dir);
  c.steps = 10;
  c.write_trace = true;
  {
    std::ofstream cfg(dir / "run.cfg");
    write_config(cfg, c);
  }
  ASSERT_EQ(run_cli("train --config " + (dir / "run.cfg").string() + " --out " + (dir / "out").string()), 0);
  const auto rows = read_metrics(dir / "out" / "metrics.csv");
  EXPECT_EQ(rows.size(), 10u);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "checkpoint.bin"));
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "checkpoint.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "trace.jsonl"));
  EXPECT_EQ(run_cli("verify --config " + (dir / "run.cfg").string() + " --verify-steps 5 --no-fd"), 0);
  EXPECT_EQ(run_cli("bench --config " + (dir / "run.cfg").string() + " --ks 1,3 --bench-steps 6 --synthetic"), 0);
  EXPECT_EQ(run_cli("report --log " + (dir / "out" / "metrics.csv").string()), 0);
  EXPECT_NE(run_cli("train --config " + (dir / "run.cfg").string() + " --k 99"), 0);
  EXPECT_NE(run_cli("train --config " + (dir / "missing.cfg").string()), 0);
}
#endif
