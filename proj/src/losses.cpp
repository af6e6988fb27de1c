#include "gridpose/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "gridpose/common.hpp"

namespace gridpose {

namespace {

using ad::Tensor;

// Floor for the argument of sqrt at points where the true value is zero.
// Keeps the derivative finite there; everywhere else max() passes the
// argument through untouched.
constexpr double kSqrtFloor = 1e-200;

Tensor guarded_sqrt(const Tensor& x) {
  return ad::sqrt(ad::max_elementwise(x, Tensor::scalar(kSqrtFloor)));
}

struct Corners {
  double x1, x2, y1, y2;
};

// Corner form of a center/size box. The loss builds the same expression out
// of tensor ops, so equal inputs reproduce these values bit for bit.
Corners corners(double cx, double cy, double w, double h) {
  return {cx - w * 0.5, cx + w * 0.5, cy - h * 0.5, cy + h * 0.5};
}

double corner_area(const Corners& c) {
  return (c.x2 - c.x1) * (c.y2 - c.y1);
}

// IoU of two center/size boxes in grid units, value level only.
double grid_iou(double pcx, double pcy, double pw, double ph, double tcx,
                double tcy, double tw, double th) {
  Corners p = corners(pcx, pcy, pw, ph);
  Corners t = corners(tcx, tcy, tw, th);
  double iw = std::max(std::min(p.x2, t.x2) - std::max(p.x1, t.x1), 0.0);
  double ih = std::max(std::min(p.y2, t.y2) - std::max(p.y1, t.y1), 0.0);
  double inter = iw * ih;
  double uni = corner_area(p) + corner_area(t) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

void check_input(const ScaleLossInput& in) {
  require(in.targets != nullptr, "loss input is missing its targets");
  const GridGeom& g = in.targets->geom;
  ad::Shape grid_shape{g.gh, g.gw, g.na(), 1};
  ad::Shape map_shape{g.gh, g.gw, g.na(), g.k};
  require(in.grid.obj_prob.shape() == grid_shape,
          "decoded grid does not match the target geometry");
  require(in.vis.shape() == map_shape,
          "visibility maps do not match the target geometry");
}

Tensor fold_sum(std::vector<Tensor> terms) {
  Tensor acc = terms.front();
  for (size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
  return acc;
}

}  // namespace

void LossWeights::validate() const {
  require(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0 && zeta >= 0.0 &&
              lambda >= 0.0,
          "loss weights must be non-negative");
  require(eps > 0.0, "correlation guard eps must be positive");
}

double bce(double p, double q) {
  require(p > 0.0 && p < 1.0, "probability outside the open interval (0,1)");
  require(q >= 0.0 && q <= 1.0, "target probability outside [0,1]");
  return -(q * std::log(p) + (1.0 - q) * std::log(1.0 - p));
}

Tensor self_correlation_loss(
    const std::vector<std::pair<Tensor, Tensor>>& dv, double eps,
    bool squared) {
  require(!dv.empty(), "self-correlation needs at least one scale");
  require(eps > 0.0, "correlation guard eps must be positive");
  std::vector<Tensor> terms;
  terms.reserve(dv.size());
  for (const auto& [d, v] : dv) {
    require(d.shape() == v.shape(),
            "correlated maps must share a shape");
    Tensor dd = d - ad::mean(d);
    Tensor dvv = v - ad::mean(v);
    Tensor num = ad::sum(dd * dvv);
    Tensor den = guarded_sqrt(ad::sum(ad::square(dd))) *
                     guarded_sqrt(ad::sum(ad::square(dvv))) +
                 Tensor::scalar(eps);
    Tensor r = num / den;
    terms.push_back(squared ? Tensor::scalar(1.0) - ad::square(r)
                            : Tensor::scalar(1.0) - r);
  }
  return fold_sum(std::move(terms)) / double(dv.size());
}

Tensor objectness_loss(const std::vector<ScaleLossInput>& scales) {
  require(!scales.empty(), "objectness loss needs at least one scale");
  std::vector<Tensor> terms;
  terms.reserve(scales.size());
  for (const ScaleLossInput& in : scales) {
    check_input(in);
    const GridGeom& g = in.targets->geom;
    size_t n = size_t(g.slots());
    const std::vector<double>& p = in.grid.obj_prob.values();
    for (double v : p)
      require(v > 0.0 && v < 1.0,
              "objectness probability outside the open interval (0,1)");
    std::vector<double> q(n, 0.0), q1(n, 1.0);
    for (const SlotTarget& t : in.targets->slots) {
      size_t s = size_t(g.slot_index(t.i, t.j, t.a));
      double iou =
          grid_iou(in.grid.cx.values()[s], in.grid.cy.values()[s],
                   in.grid.w.values()[s], in.grid.h.values()[s], t.cx, t.cy,
                   t.w, t.h);
      q[s] = std::clamp(iou, 0.0, 1.0);
      q1[s] = 1.0 - q[s];
    }
    Tensor qT = Tensor::constant(in.grid.obj_prob.shape(), std::move(q));
    Tensor q1T = Tensor::constant(in.grid.obj_prob.shape(), std::move(q1));
    Tensor bce_map = ad::neg(qT * ad::log(in.grid.obj_prob) +
                             q1T * ad::log(Tensor::scalar(1.0) -
                                           in.grid.obj_prob));
    terms.push_back(ad::sum(bce_map) * (in.targets->omega / double(n)));
  }
  return fold_sum(std::move(terms));
}

namespace {

struct SlotBox {
  Tensor x1, x2, y1, y2, area;
};

SlotBox slot_box(const DecodedGrid& grid, int64_t slot) {
  Tensor cx = ad::select(grid.cx, slot);
  Tensor cy = ad::select(grid.cy, slot);
  Tensor w = ad::select(grid.w, slot);
  Tensor h = ad::select(grid.h, slot);
  SlotBox b;
  b.x1 = cx - w * 0.5;
  b.x2 = cx + w * 0.5;
  b.y1 = cy - h * 0.5;
  b.y2 = cy + h * 0.5;
  b.area = (b.x2 - b.x1) * (b.y2 - b.y1);
  return b;
}

Tensor tensor_min(const Tensor& a, const Tensor& b) {
  return ad::neg(ad::max_elementwise(ad::neg(a), ad::neg(b)));
}

// 1 - IoU between the decoded box at `slot` and the constant target box.
Tensor slot_box_term(const DecodedGrid& grid, int64_t slot,
                     const SlotTarget& t) {
  Corners tc = corners(t.cx, t.cy, t.w, t.h);
  double t_area = corner_area(tc);
  require(t_area > 0.0, "target box has no area");
  SlotBox p = slot_box(grid, slot);
  Tensor zero = Tensor::scalar(0.0);
  Tensor iw = ad::max_elementwise(
      tensor_min(p.x2, Tensor::scalar(tc.x2)) -
          ad::max_elementwise(p.x1, Tensor::scalar(tc.x1)),
      zero);
  Tensor ih = ad::max_elementwise(
      tensor_min(p.y2, Tensor::scalar(tc.y2)) -
          ad::max_elementwise(p.y1, Tensor::scalar(tc.y1)),
      zero);
  Tensor inter = iw * ih;
  Tensor uni = p.area + Tensor::scalar(t_area) - inter;
  return Tensor::scalar(1.0) - inter / uni;
}

}  // namespace

Tensor box_loss(const std::vector<ScaleLossInput>& scales) {
  require(!scales.empty(), "box loss needs at least one scale");
  std::vector<Tensor> terms;
  for (const ScaleLossInput& in : scales) {
    check_input(in);
    const GridGeom& g = in.targets->geom;
    for (const SlotTarget& t : in.targets->slots)
      terms.push_back(slot_box_term(in.grid, g.slot_index(t.i, t.j, t.a), t));
  }
  if (terms.empty()) return Tensor::scalar(0.0);
  size_t n = terms.size();
  return fold_sum(std::move(terms)) / double(n);
}

Tensor pose_loss(const std::vector<ScaleLossInput>& scales) {
  require(!scales.empty(), "pose loss needs at least one scale");
  std::vector<Tensor> terms;
  size_t n_slots = 0;
  for (const ScaleLossInput& in : scales) {
    check_input(in);
    const GridGeom& g = in.targets->geom;
    for (const SlotTarget& t : in.targets->slots) {
      ++n_slots;
      int64_t slot = g.slot_index(t.i, t.j, t.a);
      for (int k = 0; k < g.k; ++k) {
        if (t.delta[size_t(k)] == 0) continue;
        Tensor dx = ad::select(in.grid.kx, slot * g.k + k) -
                    Tensor::scalar(t.kpx[size_t(k)]);
        Tensor dy = ad::select(in.grid.ky, slot * g.k + k) -
                    Tensor::scalar(t.kpy[size_t(k)]);
        terms.push_back(guarded_sqrt(ad::square(dx) + ad::square(dy)));
      }
    }
  }
  if (n_slots == 0 || terms.empty()) return Tensor::scalar(0.0);
  return fold_sum(std::move(terms)) / double(n_slots);
}

Tensor visibility_loss(const std::vector<ScaleLossInput>& scales) {
  require(!scales.empty(), "visibility loss needs at least one scale");
  std::vector<Tensor> terms;
  terms.reserve(scales.size());
  for (const ScaleLossInput& in : scales) {
    check_input(in);
    require(in.vis.shape() == in.targets->vis_target.shape(),
            "visibility maps do not match their target");
    Tensor r = in.vis - in.targets->vis_target;
    Tensor ssq = ad::sum(ad::square(r));
    if (ssq.value() == 0.0) {
      // Exactly on target; the norm's subgradient there is taken as zero.
      terms.push_back(Tensor::scalar(0.0));
      continue;
    }
    terms.push_back(ad::sqrt(ssq) / double(in.vis.size()));
  }
  return fold_sum(std::move(terms));
}

LossReport total_loss(const std::vector<ScaleLossInput>& scales,
                      const LossWeights& w) {
  w.validate();
  require(!scales.empty(), "total loss needs at least one scale");

  bool have_dist = true;
  for (const ScaleLossInput& in : scales)
    if (!in.dist.defined()) have_dist = false;
  require(have_dist || w.lambda == 0.0,
          "self-correlation weight is nonzero but distribution maps are "
          "missing");

  LossReport rep;
  rep.obj = objectness_loss(scales);
  rep.box = box_loss(scales);
  rep.pose = pose_loss(scales);
  rep.vis = visibility_loss(scales);
  if (have_dist) {
    std::vector<std::pair<Tensor, Tensor>> dv;
    dv.reserve(scales.size());
    for (const ScaleLossInput& in : scales) {
      require(in.dist.shape() == in.vis.shape(),
              "distribution maps do not match the visibility maps");
      dv.emplace_back(in.dist, in.vis);
    }
    rep.corr = self_correlation_loss(dv, w.eps, w.squared_corr);
  } else {
    rep.corr = Tensor::scalar(0.0);
  }

  {
    // Per-scale readouts are for logging only; keep them off the tape.
    ad::NoGradGuard ng;
    for (const ScaleLossInput& in : scales) {
      rep.obj_scale.push_back(objectness_loss({in}).value());
      rep.vis_scale.push_back(visibility_loss({in}).value());
      if (have_dist)
        rep.corr_scale.push_back(
            self_correlation_loss({{in.dist, in.vis}}, w.eps, w.squared_corr)
                .value());
      else
        rep.corr_scale.push_back(0.0);
    }
  }

  rep.total = rep.obj * w.alpha + rep.box * w.beta + rep.pose * w.gamma +
              rep.vis * w.zeta + rep.corr * w.lambda;
  return rep;
}

}  // namespace gridpose
