#pragma once

#include <functional>
#include <string>

#include "drape/optimizer.hpp"

namespace drape {

// Builds the loss graph on a fresh tape. Must be a deterministic function of
// the registered parameter values (re-seed any internal randomness per call).
using LossBuilder = std::function<ad::Value(ad::Tape&, const TapeBinding&)>;

struct GradCheckOptions {
  Scalar step_scale = 1e-5;      // h = step_scale * max(1, |x|)
  int entries_per_param = 0;     // 0 = every entry, else a seeded subsample
  std::uint64_t subsample_seed = 0;
};

struct GradCheckReport {
  Scalar max_rel_err = 0.0;
  std::string worst_param;
  Index worst_row = -1, worst_col = -1;
  long long checked = 0;

  bool pass(Scalar tol) const { return checked > 0 && max_rel_err <= tol; }
};

// Central finite differences against reverse-mode gradients for every
// unfrozen entry in the registry. The relative error denominator is floored
// at 1e-4 so near-zero gradients are compared absolutely.
GradCheckReport gradcheck(const LossBuilder& build, ParamRegistry& reg,
                          const GradCheckOptions& opt = {});

struct GradcheckSuiteReport {
  std::vector<std::pair<std::string, Scalar>> per_module;
  Scalar max_rel_err = 0;
  bool passed = false;
};

// Canned verification of every differentiable component: individual layers
// plus the full generator/projector/loss pipeline on a small instance
// (prompt_len 2, hidden 8, model width 16), `seeds` random draws each.
GradcheckSuiteReport run_gradcheck_suite(int seeds);

}  // namespace drape
