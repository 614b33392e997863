#include "imdcl/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace imdcl {

namespace {

double eval_at(const GraphBuilder& build, const std::vector<Matrix>& params) {
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(constant(p));
  return scalar_value(build(leaves));
}

}  // namespace

GradCheckResult grad_check(const GraphBuilder& build, const std::vector<Matrix>& params,
                           double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) {
    throw DimensionError("grad_check: eps must lie in [1e-7, 1e-4]");
  }

  // Analytic pass: one graph, one backward sweep.
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(param(p));
  backward(build(leaves));

  GradCheckResult result;
  std::vector<Matrix> probe = params;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t ei = 0; ei < params[pi].size(); ++ei) {
      const double saved = probe[pi].data()[ei];
      probe[pi].data()[ei] = saved + eps;
      const double up = eval_at(build, probe);
      probe[pi].data()[ei] = saved - eps;
      const double down = eval_at(build, probe);
      probe[pi].data()[ei] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = leaves[pi]->grad.data()[ei];
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = pi;
        result.worst_entry = ei;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace imdcl
