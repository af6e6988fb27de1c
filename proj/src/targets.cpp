#include "gridpose/targets.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "gridpose/distribution.hpp"

namespace gridpose {

std::vector<ScaleAnchorMatch> match_anchors(const GroundTruthPerson& person,
                                            const HeadConfig& cfg) {
  cfg.validate();
  require(person.box.w > 0.0 && person.box.h > 0.0,
          "match_anchors: box must have positive size");
  std::vector<ScaleAnchorMatch> out;
  for (size_t si = 0; si < cfg.scales.size(); ++si)
    for (size_t a = 0; a < cfg.anchors[si].size(); ++a) {
      const Anchor& an = cfg.anchors[si][a];
      const double r = std::max(
          std::max(person.box.w / an.w, an.w / person.box.w),
          std::max(person.box.h / an.h, an.h / person.box.h));
      if (r < cfg.ratio_threshold)
        out.push_back({si, static_cast<int>(a)});
    }
  return out;
}

std::vector<std::pair<int, int>> assign_cells(double cx, double cy, int gh,
                                              int gw) {
  require(gh > 0 && gw > 0, "assign_cells: empty grid");
  require(cx >= 0.0 && cx < gw && cy >= 0.0 && cy < gh,
          "assign_cells: center outside the grid");
  const int j = static_cast<int>(cx);
  const int i = static_cast<int>(cy);
  std::vector<std::pair<int, int>> out{{i, j}};
  const double fx = cx - j;
  const double fy = cy - i;
  // Sub-cell position 0.5 ties toward the left/top neighbor.
  const int jn = fx <= 0.5 ? j - 1 : j + 1;
  if (jn >= 0 && jn < gw) out.emplace_back(i, jn);
  const int in = fy <= 0.5 ? i - 1 : i + 1;
  if (in >= 0 && in < gh) out.emplace_back(in, j);
  return out;
}

namespace {

// Pulls a center offset sitting exactly on the open (-0.5, 1.5) bound to 99%
// of the bound's distance from the midpoint, so it stays encodable. Only the
// exact sub-cell tie produces such an offset.
double clamp_center_offset(double off, int& flag) {
  if (off > -0.5 && off < 1.5) return off;
  flag = 1;
  return 0.5 + (off >= 1.5 ? 0.99 : -0.99);
}

double clamp_kp_offset(double off, double bound, int& flag) {
  if (off > -bound && off < bound) return off;
  flag = 1;
  return off >= bound ? 0.99 * bound : -0.99 * bound;
}

}  // namespace

TargetSet build_targets(const std::vector<GroundTruthPerson>& scene,
                        const HeadConfig& cfg) {
  cfg.validate();
  const int K = cfg.k;

  TargetSet ts;
  std::vector<GroundTruthPerson> kept;
  std::vector<int> kept_index;
  for (size_t p = 0; p < scene.size(); ++p) {
    const GroundTruthPerson& gt = scene[p];
    gt.validate(K);
    const bool degenerate = !(gt.box.w > 0.0 && gt.box.h > 0.0);
    const bool invisible = gt.visible_count() == 0;
    const bool outside = gt.box.cx() < 0.0 || gt.box.cx() >= cfg.image_w ||
                         gt.box.cy() < 0.0 || gt.box.cy() >= cfg.image_h;
    if (degenerate || invisible || outside) {
      ts.skipped.push_back(static_cast<int>(p));
      continue;
    }
    kept.push_back(gt);
    kept_index.push_back(static_cast<int>(p));
  }

  // slot -> winning target, keyed per scale for deterministic iteration.
  std::vector<std::map<int64_t, SlotTarget>> winners(cfg.scales.size());

  for (size_t kp = 0; kp < kept.size(); ++kp) {
    const GroundTruthPerson& gt = kept[kp];
    for (const ScaleAnchorMatch& m : match_anchors(gt, cfg)) {
      const GridGeom geom = cfg.geom(m.scale_index);
      const Anchor& an = geom.anchors[m.anchor];
      const double s = geom.stride;
      const double cxg = gt.box.cx() / s;
      const double cyg = gt.box.cy() / s;
      const double prio = shape_iou(gt.box.w, gt.box.h, an.w, an.h);

      for (auto [ci, cj] : assign_cells(cxg, cyg, geom.gh, geom.gw)) {
        SlotTarget t;
        t.i = ci;
        t.j = cj;
        t.a = m.anchor;
        t.person = kept_index[kp];
        t.prio = prio;
        t.box_px = gt.box;
        t.cx = cxg;
        t.cy = cyg;
        t.w = gt.box.w / s;
        t.h = gt.box.h / s;
        t.delta = gt.delta;

        DecodedBox db;
        db.stride = geom.stride;
        db.x_off = clamp_center_offset(cxg - cj, t.box_clamped);
        db.y_off = clamp_center_offset(cyg - ci, t.box_clamped);
        db.w = t.w;
        db.h = t.h;
        t.box_raw = encode_box(db, an, geom.stride);

        t.kp_raw.resize(2 * K);
        t.kpx.resize(K);
        t.kpy.resize(K);
        t.kp_clamped.assign(K, 0);
        const double bx = 2.0 * an.w / s;
        const double by = 2.0 * an.h / s;
        for (int k = 0; k < K; ++k) {
          double ox = clamp_kp_offset(gt.keypoints[k].x / s - cj, bx,
                                      t.kp_clamped[k]);
          double oy = clamp_kp_offset(gt.keypoints[k].y / s - ci, by,
                                      t.kp_clamped[k]);
          t.kp_raw[k] = encode_keypoint_offset(ox, an.w, geom.stride);
          t.kp_raw[K + k] = encode_keypoint_offset(oy, an.h, geom.stride);
          t.kpx[k] = cj + ox;
          t.kpy[k] = ci + oy;
        }

        const int64_t slot = geom.slot_index(ci, cj, m.anchor);
        auto [it, inserted] = winners[m.scale_index].try_emplace(slot, t);
        if (!inserted && t.prio > it->second.prio) it->second = t;
      }
    }
  }

  ts.scales.resize(cfg.scales.size());
  for (size_t si = 0; si < cfg.scales.size(); ++si) {
    ScaleTargets& st = ts.scales[si];
    st.geom = cfg.geom(si);
    st.omega = cfg.omega[si];
    st.slots.reserve(winners[si].size());
    for (auto& [slot, t] : winners[si]) {
      (void)slot;
      for (int c : t.kp_clamped) ts.clamped_keypoints += c;
      st.slots.push_back(std::move(t));
    }
    st.vis_target = target_visibility(kept, st.geom, cfg.sigma_g);
  }
  return ts;
}

}  // namespace gridpose
