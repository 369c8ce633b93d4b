#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ouroboros/bench.hpp"
#include "ouroboros/config.hpp"
#include "ouroboros/concurrent.hpp"
#include "ouroboros/data.hpp"
#include "ouroboros/report.hpp"
#include "ouroboros/trainer.hpp"
#include "ouroboros/verify.hpp"

namespace fs = std::filesystem;
using namespace ouro;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::size_t> k;
  std::optional<std::string> mode;
  std::optional<std::string> optimizer;
  std::optional<std::int64_t> steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data;
  std::optional<std::string> out;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value config file");
    app->add_option("--k", k, "number of modules");
    app->add_option("--mode", mode, "sequential | ouroboros-ref | ouroboros-concurrent");
    app->add_option("--optimizer", optimizer, "sgd | adam");
    app->add_option("--steps", steps, "training steps");
    app->add_option("--seed", seed, "sets the init, data and dropout seeds");
    app->add_option("--data", data, "text corpus");
    app->add_option("--out", out, "output directory");
  }

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : load_config(config);
    if (k) c.k = *k;
    if (mode) set_field(c, "mode", *mode);
    if (optimizer) set_field(c, "optimizer", *optimizer);
    if (steps) c.steps = *steps;
    if (seed) c.reseed(*seed);
    if (data) c.data = *data;
    if (out) c.out = *out;
    return c;
  }
};

BatchStream open_data(const RunConfig& c) {
  return ingest(c.data, c.vocab_mode, c.seq_len, c.batch, c.data_seed, vocab_size(c.vocab_mode));
}

int cmd_train(const Overrides& o, const std::string& resume) {
  std::optional<TrainingRun> run;
  RunConfig c;
  if (!resume.empty()) {
    run.emplace(resume_run(resume));
    c = run->config();
    const RunConfig flags = o.resolve();
    if (o.steps) c.steps = flags.steps;
    if (o.out) c.out = flags.out;
    if (o.data) c.data = flags.data;
  } else {
    c = o.resolve();
  }
  c.validate();
  if (!run) run.emplace(c);
  const BatchStream data = open_data(c);
  const BatchSource source = [&](std::int64_t t) { return data.batch_at(t); };

  const fs::path dir = c.out;
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "config.txt");
    write_config(cfg, c);
  }
  const bool append = run->next_step() > 0 && fs::exists(dir / "metrics.csv");
  std::ofstream csv(dir / "metrics.csv", append ? std::ios::app : std::ios::trunc);
  if (!append) csv << kMetricsHeader << '\n';

  std::int64_t step = run->next_step();
  while (step < c.steps) {
    const std::int64_t until =
        c.checkpoint_every > 0 ? std::min<std::int64_t>(c.steps, (step / c.checkpoint_every + 1) * c.checkpoint_every)
                               : c.steps;
    run->run(source, until, [&](const MetricsRow& row) {
      csv << format_row(row) << '\n';
      if (row.step % 100 == 0) std::fprintf(stderr, "step %lld loss %.6f\n", static_cast<long long>(row.step), row.loss);
    });
    csv.flush();
    step = run->next_step();
    save_run(*run, dir);
  }
  if (run->next_step() == 0) save_run(*run, dir);
  if (c.write_trace) {
    std::ofstream trace(dir / "trace.jsonl", append ? std::ios::app : std::ios::trunc);
    run->trace().write_jsonl(trace);
  }
  std::printf("trained %lld steps (%s, K=%zu), outputs in %s\n", static_cast<long long>(run->next_step()),
              to_string(c.mode), c.k, dir.string().c_str());
  return 0;
}

int cmd_verify(const Overrides& o, std::int64_t steps, bool skip_fd) {
  RunConfig c = o.resolve();
  c.validate();
  const BatchStream data = open_data(c);
  VerifyOptions vo;
  vo.gradchecks = !skip_fd;
  const VerifyReport report = verify_run(c, [&](std::int64_t t) { return data.batch_at(t); }, steps, vo);
  report.write(std::cout);
  return report.passed() ? 0 : 1;
}

int cmd_bench(const Overrides& o, const std::vector<std::size_t>& ks, std::int64_t steps, bool synthetic,
              double forward, double backward, double relay) {
  RunConfig c = o.resolve();
  c.validate();
  const BatchStream data = open_data(c);
  BenchOptions bo;
  bo.steps = steps;
  if (synthetic) bo.synthetic = SyntheticCosts{forward, backward, relay};
  const auto rows = bench(c, [&](std::int64_t t) { return data.batch_at(t); }, ks, bo);
  write_bench_table(std::cout, rows);
  return 0;
}

int cmd_report(const std::string& log, double tolerance) {
  write_summary(std::cout, gradient_norm_report(read_metrics(log), tolerance));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delayed-gradient model-parallel training engine"};
  app.require_subcommand(1);

  Overrides train_o, verify_o, bench_o;
  std::string resume;
  auto* train = app.add_subcommand("train", "train and write metrics.csv, trace.jsonl and a checkpoint");
  train_o.attach(train);
  train->add_option("--resume", resume, "directory holding checkpoint.bin and checkpoint.json");

  std::int64_t verify_steps = 50;
  bool skip_fd = false;
  auto* verify = app.add_subcommand("verify", "replay a short run against the back-propagation oracle");
  verify_o.attach(verify);
  verify->add_option("--verify-steps", verify_steps, "steps to replay (at most 200)");
  verify->add_flag("--no-fd", skip_fd, "skip finite-difference checks");

  std::vector<std::size_t> ks{1, 2, 3, 4};
  std::int64_t bench_steps = 20;
  bool synthetic = false;
  double forward = 0.5, backward = 1.0, relay = 0.1;
  auto* bench_cmd = app.add_subcommand("bench", "throughput and logical-clock schedule per K");
  bench_o.attach(bench_cmd);
  bench_cmd->add_option("--ks", ks, "module counts")->delimiter(',');
  bench_cmd->add_option("--bench-steps", bench_steps, "steps per measurement");
  bench_cmd->add_flag("--synthetic", synthetic, "equal synthetic per-module costs");
  bench_cmd->add_option("--forward-cost", forward, "synthetic forward cost per module");
  bench_cmd->add_option("--backward-cost", backward, "synthetic backward cost per module");
  bench_cmd->add_option("--relay-cost", relay, "synthetic cost per boundary crossing");

  std::string log;
  double tolerance = 0.1;
  auto* report = app.add_subcommand("report", "gradient-norm trends of a metrics log");
  report->add_option("--log", log, "metrics.csv")->required();
  report->add_option("--plateau-tolerance", tolerance, "relative change counted as a plateau");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_o, resume);
    if (*verify) return cmd_verify(verify_o, verify_steps, skip_fd);
    if (*bench_cmd) return cmd_bench(bench_o, ks, bench_steps, synthetic, forward, backward, relay);
    if (*report) return cmd_report(log, tolerance);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const WorkerFailure& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
