// ===== durnn/verify.hpp =====
//
// The verification entry point behind the CLI `verify` subcommand. Runs three
// sweeps at configurable sizes — closed-form gradient equivalence per variant,
// frozen-selection finite differences on kink-guarded instances, and the
// gradient-propagation bound checks — and reports per-parameter worst errors
// as human-readable text and as JSON. A fault-injection hook corrupts one
// named gradient tensor so the failure path stays exercised end to end.

#pragma once

#include <string>
#include <vector>

namespace durnn {

struct VerifyOptions {
  // closed-form equivalence sweep (capped by the oracle: n <= 8, steps <= 10)
  int instances = 20;  // per variant
  int neurons = 4;
  int inputs = 3;
  int steps = 7;
  int batch = 2;
  double oracle_tol = 1e-9;

  // frozen-selection finite differences
  int fd_instances = 5;
  double fd_step = 1e-5;
  double fd_tol = 1e-4;

  // propagation bounds
  int bound_inits = 20;
  std::vector<int> bound_spans = {50, 200};

  unsigned long long seed = 1;
  std::string corrupt;  // gradient tensor to poison, e.g. "layer1.w_rec"
};

struct VerifyOutcome {
  bool pass = true;
  std::string text;  // one line per check
  std::string json;  // full machine-readable report
};

VerifyOutcome run_verify(const VerifyOptions& opt);

}  // namespace durnn
