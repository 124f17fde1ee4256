#pragma once

#include <functional>

#include "tcb/autograd.hpp"

namespace tcb {

struct GradCheckOptions {
  double eps = 1e-3;
  /// Denominator floor of the relative error.
  double floor = 1e-6;
  /// Check at most this many entries per parameter (randomly chosen).
  int max_entries_per_param = 64;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  /// max |analytic - numeric| / max(max |numeric|, floor) over the checked
  /// entries of all trainable parameters.
  double max_rel_error = 0.0;
  double max_abs_numeric = 0.0;
  int entries_checked = 0;
  /// Largest |gradient| reported for any frozen parameter.
  double max_frozen_grad = 0.0;
};

/// `loss` builds a scalar on a fresh graph from the current parameter values.
/// Analytic gradients come from one backward pass; numeric ones from central
/// differences of step eps on each checked entry.
GradCheckResult grad_check(const std::function<Var(Graph&, ParamStore&)>& loss, ParamStore& params,
                           const GradCheckOptions& options = {});

}  // namespace tcb
