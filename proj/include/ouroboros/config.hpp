#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "ouroboros/data.hpp"
#include "ouroboros/lr_schedule.hpp"
#include "ouroboros/optimizer.hpp"
#include "ouroboros/partition.hpp"
#include "ouroboros/pipeline.hpp"

namespace ouro {

enum class RunMode { sequential, ouroboros_ref, ouroboros_concurrent };

const char* to_string(RunMode mode);
const char* to_string(OptimizerKind kind);
const char* to_string(ScheduleMode mode);
const char* to_string(TiedGrad mode);
const char* to_string(StaleWeights mode);
const char* to_string(Balance balance);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every field maps to one `key = value` line of the config file; the key is
// the field name. Defaults are the desk-scale setting.
struct RunConfig {
  std::string data;                        // text corpus
  VocabMode vocab_mode = VocabMode::byte;
  std::size_t layers = 8;                  // transformer blocks
  std::size_t dim = 64;
  std::size_t ffn_dim = 256;
  std::size_t seq_len = 64;
  std::size_t batch = 16;
  double dropout = 0.1;
  std::size_t k = 4;                       // modules
  Balance balance = Balance::even;
  RunMode mode = RunMode::ouroboros_ref;
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 2.5e-4;
  std::int64_t warmup = 100;
  ScheduleMode schedule = ScheduleMode::warmup_cosine;
  TiedGrad tied_grad = TiedGrad::half_avg;
  StaleWeights stale_weights = StaleWeights::snapshot;
  std::uint64_t init_seed = 1;
  std::uint64_t data_seed = 2;
  std::uint64_t dropout_seed = 3;
  std::int64_t steps = 1000;
  std::int64_t checkpoint_every = 0;       // 0: final checkpoint only
  bool write_trace = true;
  std::string out = "run";                 // output directory

  // Sets the init, data and dropout seeds from one run seed.
  void reseed(std::uint64_t seed);
  ModelDims dims() const;
  LrSchedule lr_schedule() const;
  EngineOptions engine_options() const;
  // Throws ConfigError unless 1 <= k <= layers + 2, seq_len >= 2, the data
  // file exists (when `check_files`), and the schedule is well formed.
  void validate(bool check_files = true) const;
};

// Sets one field from its textual form. Throws ConfigError on an unknown key
// or a malformed value.
void set_field(RunConfig& config, std::string_view key, std::string_view value);

// Flat `key = value` lines; `#` starts a comment, blank lines are ignored.
RunConfig parse_config(std::istream& in, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);
void write_config(std::ostream& out, const RunConfig& config);

std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(std::string_view json);

}  // namespace ouro
