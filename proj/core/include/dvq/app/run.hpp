#pragma once

#include <string>

#include "dvq/app/config.hpp"

namespace dvq::app {

// Subcommands: synth, train, train-prior, train-deform, generate, deform,
// eval, grad-check, mesh-info. Returns a process exit status (0 ok,
// 1 runtime failure). Unknown commands throw.
int run(const std::string& command, const RunConfig& cfg);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0;
  double threshold = 0;
  bool passed = false;
};

// The registered differentiable blocks checked by `grad-check`.
std::vector<GradCheckEntry> run_grad_checks(bool verbose = true);

}  // namespace dvq::app
