#pragma once

#include "simsr/ad/tape.hpp"

#include <functional>
#include <vector>

namespace simsr::ad {

using ScalarFn = std::function<Var(Tape&, const Var&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  Tensor analytic;
  Tensor numeric;
};

/// Compares reverse-mode gradients of f at point against central finite
/// differences: max_i |analytic_i - fd_i| / (|analytic_i| + 1e-8).
GradCheckResult grad_check_report(const ScalarFn& f, const Tensor& point, double h);

inline double grad_check(const ScalarFn& f, const Tensor& point, double h) {
  return grad_check_report(f, point, h).max_rel_error;
}

/// Scalar entry of a parameter: params.all()[param].value[element].
struct ParamEntry {
  std::size_t param = 0;
  std::size_t element = 0;
};

using LossFn = std::function<Var(Tape&)>;

/// Same comparison for selected parameter entries of a loss that reads its
/// parameters through Tape::parameter. Values are restored afterwards.
GradCheckResult grad_check_params(const LossFn& loss, ParamSet& params, const std::vector<ParamEntry>& entries,
                                  double h);

}  // namespace simsr::ad
