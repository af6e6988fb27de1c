#include "gridpose/postprocess.hpp"

#include <algorithm>
#include <numeric>

namespace gridpose {

void PostprocessConfig::validate() const {
  require(conf_threshold >= 0.0 && conf_threshold <= 1.0,
          "confidence threshold outside [0,1]");
  require(iou_threshold > 0.0 && iou_threshold < 1.0,
          "suppression threshold outside (0,1)");
  require(vis_threshold >= 0.0 && vis_threshold <= 1.0,
          "visibility threshold outside [0,1]");
}

std::vector<PersonInstance> extract_candidates(
    const std::vector<ScalePrediction>& scales, double conf_threshold) {
  require(conf_threshold >= 0.0 && conf_threshold <= 1.0,
          "confidence threshold outside [0,1]");
  std::vector<PersonInstance> out;
  for (const ScalePrediction& sp : scales) {
    const GridGeom& g = sp.geom;
    ad::Shape box_shape{g.gh, g.gw, g.na(), 1};
    ad::Shape map_shape{g.gh, g.gw, g.na(), g.k};
    require(sp.grid.obj_prob.shape() == box_shape,
            "prediction does not match its geometry");
    require(sp.vis.shape() == map_shape,
            "visibility maps do not match the geometry");
    const std::vector<double>& p = sp.grid.obj_prob.values();
    const std::vector<double>& cx = sp.grid.cx.values();
    const std::vector<double>& cy = sp.grid.cy.values();
    const std::vector<double>& w = sp.grid.w.values();
    const std::vector<double>& h = sp.grid.h.values();
    const std::vector<double>& kx = sp.grid.kx.values();
    const std::vector<double>& ky = sp.grid.ky.values();
    double s = g.stride;
    for (int i = 0; i < g.gh; ++i) {
      for (int j = 0; j < g.gw; ++j) {
        for (int a = 0; a < g.na(); ++a) {
          size_t slot = size_t(g.slot_index(i, j, a));
          if (p[slot] < conf_threshold) continue;
          PersonInstance inst;
          inst.score = p[slot];
          inst.box = Rect{s * (cx[slot] - 0.5 * w[slot]),
                          s * (cy[slot] - 0.5 * h[slot]), s * w[slot],
                          s * h[slot]};
          inst.keypoints.reserve(size_t(g.k));
          inst.vis_scores.reserve(size_t(g.k));
          for (int k = 0; k < g.k; ++k) {
            double px = s * kx[slot * size_t(g.k) + size_t(k)];
            double py = s * ky[slot * size_t(g.k) + size_t(k)];
            inst.keypoints.push_back({px, py});
            inst.vis_scores.push_back(
                visibility_score(sp.vis, g, px, py, a, k).score);
          }
          inst.kept.assign(size_t(g.k), true);
          out.push_back(std::move(inst));
        }
      }
    }
  }
  return out;
}

std::vector<PersonInstance> nms(const std::vector<PersonInstance>& instances,
                                double iou_threshold) {
  require(iou_threshold > 0.0 && iou_threshold < 1.0,
          "suppression threshold outside (0,1)");
  std::vector<size_t> order(instances.size());
  std::iota(order.begin(), order.end(), size_t(0));
  // Stable sort keeps the earlier input index first among equal scores.
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return instances[a].score > instances[b].score;
  });
  std::vector<char> dead(instances.size(), 0);
  std::vector<PersonInstance> out;
  for (size_t oi = 0; oi < order.size(); ++oi) {
    size_t idx = order[oi];
    if (dead[idx]) continue;
    out.push_back(instances[idx]);
    for (size_t oj = oi + 1; oj < order.size(); ++oj) {
      size_t jdx = order[oj];
      if (dead[jdx]) continue;
      if (rect_iou(instances[idx].box, instances[jdx].box) >= iou_threshold)
        dead[jdx] = 1;
    }
  }
  return out;
}

PersonInstance filter_keypoints(const PersonInstance& instance,
                                double vis_threshold) {
  require(vis_threshold >= 0.0 && vis_threshold <= 1.0,
          "visibility threshold outside [0,1]");
  require(instance.vis_scores.size() == instance.keypoints.size(),
          "instance keypoints and scores disagree");
  PersonInstance out = instance;
  out.kept.resize(out.vis_scores.size());
  for (size_t k = 0; k < out.vis_scores.size(); ++k)
    out.kept[k] = out.vis_scores[k] >= vis_threshold;
  return out;
}

std::vector<PersonInstance> detect(const std::vector<ScalePrediction>& scales,
                                   const PostprocessConfig& cfg) {
  cfg.validate();
  std::vector<PersonInstance> kept =
      nms(extract_candidates(scales, cfg.conf_threshold), cfg.iou_threshold);
  for (PersonInstance& inst : kept)
    inst = filter_keypoints(inst, cfg.vis_threshold);
  return kept;
}

}  // namespace gridpose
