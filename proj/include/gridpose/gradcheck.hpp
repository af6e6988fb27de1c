#pragma once

#include <functional>
#include <vector>

#include "gridpose/tensor.hpp"

namespace gridpose::ad {

struct GradCheckIssue {
  int leaf = -1;       // position in the leaves vector
  int64_t index = -1;  // flat element index within that leaf
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool non_finite = false;  // loss was non-finite (or threw) at a perturbed point
};

struct GradCheckReport {
  bool pass = false;
  double max_rel_error = 0.0;
  int64_t checked = 0;
  GradCheckIssue worst;
  std::vector<GradCheckIssue> failures;
};

// Central-difference check of d f() / d leaves. f must rebuild its graph from
// the leaf tensors on every call; the harness perturbs leaf values in place
// and restores them. Relative error is |analytic - numeric| normalized by
// max(1, |analytic|, |numeric|) so that near-zero gradients are judged on an
// absolute scale where finite-difference noise dominates.
GradCheckReport gradcheck(const std::function<Tensor()>& f,
                          const std::vector<Tensor>& leaves, double step,
                          double tol);

}  // namespace gridpose::ad
