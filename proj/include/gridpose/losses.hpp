#pragma once

#include <utility>
#include <vector>

#include "gridpose/grid.hpp"
#include "gridpose/targets.hpp"
#include "gridpose/tensor.hpp"

namespace gridpose {

struct LossWeights {
  double alpha = 1.0;   // objectness
  double beta = 0.05;   // box
  double gamma = 0.025; // pose
  double zeta = 0.5;    // visibility
  double lambda = 0.1;  // self-correlation
  double eps = 1e-8;    // correlation denominator guard
  bool squared_corr = true;  // optional unsquared 1-r variant when false

  void validate() const;
};

// One scale's predictions paired with its supervision. `dist` may be left
// undefined when the self-correlation term is weighted zero; every other
// field is required.
struct ScaleLossInput {
  DecodedGrid grid;
  ad::Tensor vis;   // predicted visibility maps [gh,gw,na,K]
  ad::Tensor dist;  // keypoint distribution maps [gh,gw,na,K]
  const ScaleTargets* targets = nullptr;
};

// Binary cross-entropy kernel on probabilities; p must lie strictly in (0,1).
double bce(double p, double q);

// Mean over scales of 1 - r^2 (or 1 - r when squared is false), r the Pearson
// correlation over all elements of that scale's pair, with `eps` added to the
// denominator.
ad::Tensor self_correlation_loss(
    const std::vector<std::pair<ad::Tensor, ad::Tensor>>& dv, double eps,
    bool squared = true);

// Sum over scales of omega_s / n(G^s) * sum of per-slot BCE against
// q = IoU(decoded box, target box) on assigned slots and q = 0 elsewhere.
// The IoU inside q is computed from current values and carries no gradient.
ad::Tensor objectness_loss(const std::vector<ScaleLossInput>& scales);

// Mean over all assigned slots (pooled across scales) of 1 - IoU, with the
// IoU fully differentiable; no assignments gives exactly 0.
ad::Tensor box_loss(const std::vector<ScaleLossInput>& scales);

// Mean over all assigned slots of the summed Euclidean keypoint error in grid
// units, restricted to keypoints flagged visible; no assignments gives 0.
ad::Tensor pose_loss(const std::vector<ScaleLossInput>& scales);

// Sum over scales of ||V - V_target||_2 / element count.
ad::Tensor visibility_loss(const std::vector<ScaleLossInput>& scales);

struct LossReport {
  ad::Tensor obj, box, pose, vis, corr, total;
  std::vector<double> obj_scale, vis_scale, corr_scale;
};

LossReport total_loss(const std::vector<ScaleLossInput>& scales,
                      const LossWeights& w);

}  // namespace gridpose
