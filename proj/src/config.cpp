#include "ouroboros/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"
#include "ouroboros/rng.hpp"

namespace ouro {

const char* to_string(RunMode mode) {
  switch (mode) {
    case RunMode::sequential: return "sequential";
    case RunMode::ouroboros_ref: return "ouroboros-ref";
    case RunMode::ouroboros_concurrent: return "ouroboros-concurrent";
  }
  return "?";
}

const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

const char* to_string(ScheduleMode mode) {
  switch (mode) {
    case ScheduleMode::fixed: return "fixed";
    case ScheduleMode::diminishing: return "diminishing";
    case ScheduleMode::warmup_cosine: return "warmup-cosine";
  }
  return "?";
}

const char* to_string(TiedGrad mode) { return mode == TiedGrad::half_avg ? "half_avg" : "sum"; }
const char* to_string(StaleWeights mode) { return mode == StaleWeights::snapshot ? "snapshot" : "current"; }
const char* to_string(Balance balance) { return balance == Balance::even ? "even" : "by-cost"; }

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config: bad value '" + std::string(text) + "' for " + std::string(key));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config: bad boolean '" + std::string(text) + "' for " + std::string(key));
}

template <class E>
E parse_enum(std::string_view key, std::string_view text, std::initializer_list<E> options) {
  for (E e : options) {
    std::string name = to_string(e);
    if (text == name) return e;
    for (auto& c : name)
      if (c == '-') c = '_';
    if (text == name) return e;
  }
  throw ConfigError("config: bad value '" + std::string(text) + "' for " + std::string(key));
}

using Setter = std::function<void(RunConfig&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"data", [](RunConfig& c, std::string_view v) { c.data = std::string(v); }},
      {"vocab_mode",
       [](RunConfig& c, std::string_view v) {
         try {
           c.vocab_mode = parse_vocab_mode(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(std::string("config: ") + e.what());
         }
       }},
      {"layers", [](RunConfig& c, std::string_view v) { c.layers = parse_number<std::size_t>("layers", v); }},
      {"dim", [](RunConfig& c, std::string_view v) { c.dim = parse_number<std::size_t>("dim", v); }},
      {"ffn_dim", [](RunConfig& c, std::string_view v) { c.ffn_dim = parse_number<std::size_t>("ffn_dim", v); }},
      {"seq_len", [](RunConfig& c, std::string_view v) { c.seq_len = parse_number<std::size_t>("seq_len", v); }},
      {"batch", [](RunConfig& c, std::string_view v) { c.batch = parse_number<std::size_t>("batch", v); }},
      {"dropout", [](RunConfig& c, std::string_view v) { c.dropout = parse_number<double>("dropout", v); }},
      {"k", [](RunConfig& c, std::string_view v) { c.k = parse_number<std::size_t>("k", v); }},
      {"balance",
       [](RunConfig& c, std::string_view v) {
         c.balance = parse_enum("balance", v, {Balance::even, Balance::by_cost});
       }},
      {"mode",
       [](RunConfig& c, std::string_view v) {
         c.mode = parse_enum("mode", v,
                             {RunMode::sequential, RunMode::ouroboros_ref, RunMode::ouroboros_concurrent});
       }},
      {"optimizer",
       [](RunConfig& c, std::string_view v) {
         c.optimizer = parse_enum("optimizer", v, {OptimizerKind::sgd, OptimizerKind::adam});
       }},
      {"lr", [](RunConfig& c, std::string_view v) { c.lr = parse_number<double>("lr", v); }},
      {"warmup", [](RunConfig& c, std::string_view v) { c.warmup = parse_number<std::int64_t>("warmup", v); }},
      {"schedule",
       [](RunConfig& c, std::string_view v) {
         c.schedule = parse_enum("schedule", v,
                                 {ScheduleMode::fixed, ScheduleMode::diminishing, ScheduleMode::warmup_cosine});
       }},
      {"tied_grad",
       [](RunConfig& c, std::string_view v) {
         c.tied_grad = parse_enum("tied_grad", v, {TiedGrad::half_avg, TiedGrad::sum});
       }},
      {"stale_weights",
       [](RunConfig& c, std::string_view v) {
         c.stale_weights = parse_enum("stale_weights", v, {StaleWeights::snapshot, StaleWeights::current});
       }},
      {"init_seed",
       [](RunConfig& c, std::string_view v) { c.init_seed = parse_number<std::uint64_t>("init_seed", v); }},
      {"data_seed",
       [](RunConfig& c, std::string_view v) { c.data_seed = parse_number<std::uint64_t>("data_seed", v); }},
      {"dropout_seed",
       [](RunConfig& c, std::string_view v) { c.dropout_seed = parse_number<std::uint64_t>("dropout_seed", v); }},
      {"steps", [](RunConfig& c, std::string_view v) { c.steps = parse_number<std::int64_t>("steps", v); }},
      {"checkpoint_every",
       [](RunConfig& c, std::string_view v) {
         c.checkpoint_every = parse_number<std::int64_t>("checkpoint_every", v);
       }},
      {"write_trace", [](RunConfig& c, std::string_view v) { c.write_trace = parse_bool("write_trace", v); }},
      {"out", [](RunConfig& c, std::string_view v) { c.out = std::string(v); }},
  };
  return table;
}

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::vector<std::pair<std::string, std::string>> fields(const RunConfig& c) {
  return {
      {"data", c.data},
      {"vocab_mode", to_string(c.vocab_mode)},
      {"layers", std::to_string(c.layers)},
      {"dim", std::to_string(c.dim)},
      {"ffn_dim", std::to_string(c.ffn_dim)},
      {"seq_len", std::to_string(c.seq_len)},
      {"batch", std::to_string(c.batch)},
      {"dropout", format_double(c.dropout)},
      {"k", std::to_string(c.k)},
      {"balance", to_string(c.balance)},
      {"mode", to_string(c.mode)},
      {"optimizer", to_string(c.optimizer)},
      {"lr", format_double(c.lr)},
      {"warmup", std::to_string(c.warmup)},
      {"schedule", to_string(c.schedule)},
      {"tied_grad", to_string(c.tied_grad)},
      {"stale_weights", to_string(c.stale_weights)},
      {"init_seed", std::to_string(c.init_seed)},
      {"data_seed", std::to_string(c.data_seed)},
      {"dropout_seed", std::to_string(c.dropout_seed)},
      {"steps", std::to_string(c.steps)},
      {"checkpoint_every", std::to_string(c.checkpoint_every)},
      {"write_trace", c.write_trace ? "true" : "false"},
      {"out", c.out},
  };
}

}  // namespace

void RunConfig::reseed(std::uint64_t seed) {
  init_seed = seed;
  data_seed = derive_seed(seed, 1);
  dropout_seed = derive_seed(seed, 2);
}

ModelDims RunConfig::dims() const {
  ModelDims d;
  d.vocab = vocab_size(vocab_mode);
  d.dim = dim;
  d.ffn_dim = ffn_dim;
  d.seq_len = seq_len;
  d.blocks = layers;
  d.dropout = dropout;
  return d;
}

LrSchedule RunConfig::lr_schedule() const { return LrSchedule{lr, warmup, steps, schedule}; }

EngineOptions RunConfig::engine_options() const {
  EngineOptions o;
  o.modules = k;
  o.balance = balance;
  o.tied_grad = tied_grad;
  o.stale_weights = stale_weights;
  o.dropout_seed = dropout_seed;
  o.train = true;
  return o;
}

void RunConfig::validate(bool check_files) const {
  if (k < 1 || k > layers + 2) {
    throw ConfigError("config: k = " + std::to_string(k) + " must lie in [1, layers + 2 = " +
                      std::to_string(layers + 2) + "]");
  }
  if (seq_len < 2) throw ConfigError("config: seq_len must be at least 2");
  if (dim == 0 || ffn_dim == 0 || batch == 0) throw ConfigError("config: dims and batch must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("config: dropout must lie in [0, 1)");
  if (steps < 1) throw ConfigError("config: steps must be positive");
  if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
  if (warmup < 0) throw ConfigError("config: warmup must be non-negative");
  if (schedule == ScheduleMode::warmup_cosine && warmup >= steps) {
    throw ConfigError("config: warmup must be shorter than steps");
  }
  if (checkpoint_every < 0) throw ConfigError("config: checkpoint_every must be non-negative");
  if (check_files && !std::filesystem::is_regular_file(data)) {
    throw ConfigError("config: data file '" + data + "' does not exist");
  }
}

void set_field(RunConfig& config, std::string_view key, std::string_view value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("config: unknown key '" + std::string(key) + "'");
  it->second(config, value);
}

RunConfig parse_config(std::istream& in, const std::string& origin) {
  RunConfig c;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected key = value");
    }
    try {
      set_field(c, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  return parse_config(in, path.string());
}

void write_config(std::ostream& out, const RunConfig& config) {
  for (const auto& [key, value] : fields(config)) out << key << " = " << value << '\n';
}

std::string config_to_json(const RunConfig& config) {
  nlohmann::ordered_json j;
  for (const auto& [key, value] : fields(config)) j[key] = value;
  return j.dump(2);
}

RunConfig config_from_json(std::string_view json) {
  RunConfig c;
  const auto j = nlohmann::json::parse(json);
  for (const auto& [key, value] : j.items()) set_field(c, key, value.get<std::string>());
  return c;
}

}  // namespace ouro
