#pragma once

#include <functional>
#include <vector>

#include "imdcl/autodiff.hpp"

namespace imdcl {

// Builds a 1x1 loss node from bound parameter leaves. Called repeatedly by
// grad_check, so it must be a pure function of the leaf values.
using GraphBuilder = std::function<Var(const std::vector<Var>& params)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_param = 0;   // which parameter matrix
  std::size_t worst_entry = 0;   // flat entry index within it
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares reverse-mode gradients against central finite differences for
// every entry of every parameter. Relative error uses the denominator
// max(|analytic|, |numeric|, 1e-8). eps must lie in [1e-7, 1e-4].
GradCheckResult grad_check(const GraphBuilder& build, const std::vector<Matrix>& params,
                           double eps = 1e-5);

}  // namespace imdcl
