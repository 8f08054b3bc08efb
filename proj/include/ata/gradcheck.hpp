#pragma once

#include <string>
#include <vector>

#include "ata/rng.hpp"

namespace ata::gradcheck {

struct CheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Central-difference comparison for every differentiable primitive and the
// composed layers. Relative error per component:
// |autodiff - fd| / max(1, |fd|), fd with step h.
std::vector<CheckResult> run_all(int seeds_per_check = 10, double h = 1e-5, double tol = 1e-4);

bool all_pass(const std::vector<CheckResult>& results);

}  // namespace ata::gradcheck
