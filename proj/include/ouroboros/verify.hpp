#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "ouroboros/config.hpp"
#include "ouroboros/gradcheck.hpp"
#include "ouroboros/pipeline.hpp"

namespace ouro {

// Deviation of one applied gradient from the sequential-backprop oracle.
// module == K denotes g_V.
struct OracleEntry {
  std::int64_t step = 0;
  std::size_t module = 0;
  double deviation = 0.0;
  bool bitwise = false;
};

struct VerifyOptions {
  double tolerance = 1e-10;
  double fd_tolerance = 1e-6;
  int fd_instances = 2;           // per layer kind and for the full model
  std::size_t replay_pairs = 100;  // random (module, step) recompute checks
  bool gradchecks = true;
  bool k1_check = true;
};

struct VerifyReport {
  std::size_t modules = 0;
  std::int64_t steps = 0;
  std::vector<OracleEntry> oracle;
  double max_deviation = 0.0;
  bool oracle_bitwise = true;
  bool oracle_informative = false;  // stale_weights = current: reported, never failing
  std::vector<GradCheckResult> gradchecks;
  std::size_t replay_checked = 0;
  std::size_t replay_mismatches = 0;
  bool k1_checked = false;
  bool k1_bitwise = true;
  bool tie_ok = true;
  VerifyOptions options;

  bool oracle_ok() const { return oracle_informative || max_deviation < options.tolerance; }
  bool gradchecks_ok() const;
  bool passed() const;
  void write(std::ostream& out) const;
};

// Replays `steps` steps of the configured ouroboros schedule (reference
// executor) keeping a copy of the weights at every step, re-derives every
// g_k^t and g_V^t by plain back-propagation at the recorded weights, and
// runs the finite-difference, dropout-replay, K=1 and tie checks.
// Throws std::invalid_argument when steps > 200.
VerifyReport verify_run(const RunConfig& config, const BatchSource& batches, std::int64_t steps,
                        const VerifyOptions& options = {});

}  // namespace ouro
