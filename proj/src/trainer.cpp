#include "ouroboros/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "ouroboros/concurrent.hpp"

namespace ouro {

namespace {

std::size_t optimizer_groups(const RunConfig& c) {
  return c.mode == RunMode::sequential ? 2 : c.k + 1;
}

std::uint64_t as_u64(std::int64_t v) { return static_cast<std::uint64_t>(v); }
std::int64_t as_i64(std::uint64_t v) { return static_cast<std::int64_t>(v); }

std::string key(const std::string& prefix, std::size_t i) { return prefix + std::to_string(i); }

void put_params(Checkpoint& c, const std::string& prefix, const std::vector<Layer>& layers) {
  std::size_t i = 0;
  for (const auto& layer : layers)
    for (const auto& p : layer.params) c.tensors[key(prefix, i++)] = p;
}

void get_params(const Checkpoint& c, const std::string& prefix, std::vector<Layer>& layers) {
  std::size_t i = 0;
  for (auto& layer : layers) {
    for (auto& p : layer.params) {
      const Tensor& t = c.tensor(key(prefix, i++));
      if (t.shape() != p.shape()) {
        throw CheckpointError("checkpoint: " + prefix + " shape " + shape_string(t.shape()) + " vs model " +
                              shape_string(p.shape()));
      }
      p = t;
    }
  }
}

Tensor ids_tensor(const std::vector<int>& ids) {
  std::vector<double> v(ids.begin(), ids.end());
  const std::size_t n = v.size();
  return n == 0 ? Tensor() : Tensor({n}, std::move(v));
}

std::vector<int> tensor_ids(const Tensor& t) {
  std::vector<int> ids;
  for (double v : t.data()) ids.push_back(static_cast<int>(v));
  return ids;
}

void put_moments(Checkpoint& c, const Optimizer& opt) {
  for (std::size_t g = 0; g < opt.group_count(); ++g) {
    const AdamMoments& m = opt.moments(g);
    const std::string p = "opt.g" + std::to_string(g);
    c.integers[p + ".size"] = m.m.size();
    for (std::size_t i = 0; i < m.m.size(); ++i) {
      c.tensors[key(p + ".m", i)] = m.m[i];
      c.tensors[key(p + ".v", i)] = m.v[i];
    }
  }
}

void get_moments(const Checkpoint& c, Optimizer& opt) {
  for (std::size_t g = 0; g < opt.group_count(); ++g) {
    AdamMoments& m = opt.moments(g);
    const std::string p = "opt.g" + std::to_string(g);
    const std::size_t n = c.integer(p + ".size");
    m.m.clear();
    m.v.clear();
    for (std::size_t i = 0; i < n; ++i) {
      m.m.push_back(c.tensor(key(p + ".m", i)));
      m.v.push_back(c.tensor(key(p + ".v", i)));
    }
  }
}

}  // namespace

TrainingRun::TrainingRun(const RunConfig& config)
    : config_(config), optimizer_(config.optimizer, optimizer_groups(config)) {
  config_.validate(false);
  Model model = init_model(config_.dims(), config_.init_seed);
  if (config_.mode == RunMode::sequential) {
    const ModulePartition part = partition(model.layers.size(), config_.k, config_.balance, {});
    sequential_costs_ = CostModel::from_partition(part);
    model_ = std::move(model);
  } else {
    engine_ = std::make_unique<PipelineEngine>(std::move(model), config_.engine_options());
  }
}

double TrainingRun::logical_clock() const {
  return engine_ ? engine_->logical_clock() : sequential_clock_;
}

const ScheduleTrace& TrainingRun::trace() const {
  return engine_ ? engine_->trace() : sequential_trace_;
}

Model TrainingRun::model() const { return engine_ ? engine_->model() : *model_; }

MetricsRow TrainingRun::row_for(const StepRecord& record, double lr) const {
  MetricsRow row;
  row.step = record.packet.step;
  row.wall_ms = record.wall_ms;
  row.logical = logical_clock();
  row.loss = record.loss;
  row.grad_sq_norm = record.packet.squared_norm();
  row.lr = lr;
  if (!std::isfinite(row.loss) || !std::isfinite(row.grad_sq_norm)) {
    std::ostringstream msg;
    msg << "training diverged at step " << row.step << ": loss " << row.loss << ", gradient norm^2 "
        << row.grad_sq_norm;
    throw DivergenceError(msg.str());
  }
  return row;
}

void TrainingRun::run(const BatchSource& batches, std::int64_t until, const RowObserver& on_row) {
  if (until <= next_step_) return;
  const LrSchedule schedule = config_.lr_schedule();
  try {
    if (config_.mode == RunMode::sequential) {
      const std::vector<std::int64_t> all_modules(config_.k, 0);
      for (std::int64_t t = next_step_; t < until; ++t) {
        const auto start = std::chrono::steady_clock::now();
        const double lr = lr_at(schedule, t);
        SequentialStep s = sequential_step(t, batches(t), *model_, optimizer_, lr, config_.tied_grad,
                                           config_.dropout_seed, true);
        StepRecord r;
        r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        r.loss = s.loss;
        r.packet = std::move(s.packet);
        std::vector<std::int64_t> samples(config_.k, t);
        r.logical = record_step(sequential_trace_, sequential_costs_, ExecutionMode::sequential, t, samples,
                                sequential_clock_);
        sequential_clock_ += r.logical;
        next_step_ = t + 1;
        const MetricsRow row = row_for(r, lr);
        if (on_row) on_row(row);
      }
      return;
    }
    const StepObserver observer = [&](const StepRecord& r) {
      next_step_ = r.packet.step + 1;
      const MetricsRow row = row_for(r, lr_at(schedule, r.packet.step));
      if (on_row) on_row(row);
    };
    if (config_.mode == RunMode::ouroboros_concurrent && engine_->module_count() > 1) {
      try {
        run_concurrent(*engine_, batches, optimizer_, schedule, next_step_, until - next_step_, observer);
      } catch (const WorkerFailure& e) {
        const std::string what = e.what();
        if (what.find("diverged") != std::string::npos || what.find("non-finite") != std::string::npos) {
          throw DivergenceError(what);
        }
        throw;
      }
    } else {
      run_reference(*engine_, batches, optimizer_, schedule, next_step_, until - next_step_, observer);
    }
  } catch (const NonFiniteError& e) {
    throw DivergenceError(std::string("training diverged: ") + e.what());
  }
}

Checkpoint TrainingRun::save_state() const {
  Checkpoint c;
  c.integers["format.mode"] = static_cast<std::uint64_t>(config_.mode);
  c.integers["format.k"] = config_.k;
  c.integers["step"] = as_u64(next_step_);
  c.integers["seed.init"] = config_.init_seed;
  c.integers["seed.data"] = config_.data_seed;
  c.integers["seed.dropout"] = config_.dropout_seed;
  c.reals["clock"] = logical_clock();
  put_moments(c, optimizer_);
  if (!engine_) {
    c.tensors["vocab"] = model_->vocab_matrix;
    put_params(c, "p", model_->layers);
    return c;
  }
  c.tensors["vocab"] = engine_->vocab_matrix();
  const auto& modules = engine_->modules();
  for (std::size_t k = 0; k < modules.size(); ++k) {
    const ModuleState& m = modules[k];
    const std::string mk = "m" + std::to_string(k);
    put_params(c, mk + ".p", m.layers());
    c.integers[mk + ".slots"] = m.slots().size();
    for (std::size_t j = 0; j < m.slots().size(); ++j) {
      const StaleSlot& s = m.slots()[j];
      const std::string p = mk + ".slot" + std::to_string(j);
      c.integers[p + ".step"] = as_u64(s.step);
      c.integers[p + ".sample"] = as_u64(s.sample_id);
      c.integers[p + ".dropout_seed"] = s.dropout_seed;
      c.integers[p + ".checksum"] = s.output_checksum;
      c.integers[p + ".batch"] = s.batch.batch;
      c.integers[p + ".seq"] = s.batch.seq;
      c.tensors[p + ".input"] = s.input;
      c.tensors[p + ".tokens"] = ids_tensor(s.batch.tokens);
      c.tensors[p + ".targets"] = ids_tensor(s.batch.targets);
    }
    c.integers[mk + ".snaps"] = m.snapshots().size();
    for (std::size_t j = 0; j < m.snapshots().size(); ++j) {
      const WeightSnapshot& s = m.snapshots()[j];
      const std::string p = mk + ".snap" + std::to_string(j);
      c.integers[p + ".step"] = as_u64(s.step);
      c.integers[p + ".checksum"] = s.checksum;
      c.tensors[p + ".vocab"] = s.vocab_matrix;
      put_params(c, p + ".p", s.layers);
    }
    c.integers[mk + ".inbox"] = m.inbox().size();
    for (std::size_t j = 0; j < m.inbox().size(); ++j) {
      const std::string p = mk + ".inbox" + std::to_string(j);
      c.integers[p + ".step"] = as_u64(m.inbox()[j].sample_step);
      c.tensors[p + ".grad"] = m.inbox()[j].grad;
    }
  }
  return c;
}

void TrainingRun::load_state(const Checkpoint& c) {
  if (c.integer("format.mode") != static_cast<std::uint64_t>(config_.mode) || c.integer("format.k") != config_.k) {
    throw CheckpointError("checkpoint: saved mode/K do not match the run configuration");
  }
  next_step_ = as_i64(c.integer("step"));
  get_moments(c, optimizer_);
  const Tensor& vocab = c.tensor("vocab");
  if (!engine_) {
    if (vocab.shape() != model_->vocab_matrix.shape()) throw CheckpointError("checkpoint: vocab shape mismatch");
    model_->vocab_matrix = vocab;
    get_params(c, "p", model_->layers);
    sequential_clock_ = c.real("clock");
    return;
  }
  if (vocab.shape() != engine_->vocab_matrix().shape()) throw CheckpointError("checkpoint: vocab shape mismatch");
  engine_->vocab_matrix() = vocab;
  engine_->set_logical_clock(c.real("clock"));
  auto& modules = engine_->modules();
  for (std::size_t k = 0; k < modules.size(); ++k) {
    ModuleState& m = modules[k];
    const std::string mk = "m" + std::to_string(k);
    get_params(c, mk + ".p", m.layers());
    m.slots().clear();
    for (std::size_t j = 0, n = c.integer(mk + ".slots"); j < n; ++j) {
      const std::string p = mk + ".slot" + std::to_string(j);
      StaleSlot s;
      s.step = as_i64(c.integer(p + ".step"));
      s.sample_id = as_i64(c.integer(p + ".sample"));
      s.dropout_seed = c.integer(p + ".dropout_seed");
      s.output_checksum = c.integer(p + ".checksum");
      s.batch.batch = c.integer(p + ".batch");
      s.batch.seq = c.integer(p + ".seq");
      s.input = c.tensor(p + ".input");
      s.batch.tokens = tensor_ids(c.tensor(p + ".tokens"));
      s.batch.targets = tensor_ids(c.tensor(p + ".targets"));
      m.slots().push_back(std::move(s));
    }
    m.snapshots().clear();
    for (std::size_t j = 0, n = c.integer(mk + ".snaps"); j < n; ++j) {
      const std::string p = mk + ".snap" + std::to_string(j);
      WeightSnapshot s;
      s.step = as_i64(c.integer(p + ".step"));
      s.checksum = c.integer(p + ".checksum");
      s.vocab_matrix = c.tensor(p + ".vocab");
      s.layers = m.layers();
      get_params(c, p + ".p", s.layers);
      m.snapshots().push_back(std::move(s));
    }
    m.inbox().clear();
    for (std::size_t j = 0, n = c.integer(mk + ".inbox"); j < n; ++j) {
      const std::string p = mk + ".inbox" + std::to_string(j);
      m.inbox().push_back(BoundaryGradient{as_i64(c.integer(p + ".step")), c.tensor(p + ".grad")});
    }
  }
}

void save_run(const TrainingRun& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_checkpoint(run.save_state(), dir / "checkpoint.bin");
  std::ofstream sidecar(dir / "checkpoint.json");
  if (!sidecar) throw CheckpointError("checkpoint: cannot write " + (dir / "checkpoint.json").string());
  sidecar << config_to_json(run.config()) << '\n';
}

TrainingRun resume_run(const std::filesystem::path& dir) {
  std::ifstream sidecar(dir / "checkpoint.json");
  if (!sidecar) throw CheckpointError("checkpoint: cannot read " + (dir / "checkpoint.json").string());
  const std::string json((std::istreambuf_iterator<char>(sidecar)), std::istreambuf_iterator<char>());
  TrainingRun run(config_from_json(json));
  run.load_state(load_checkpoint(dir / "checkpoint.bin"));
  return run;
}

}  // namespace ouro
