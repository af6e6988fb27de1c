#pragma once

#include <array>
#include <utility>
#include <vector>

#include "gridpose/grid.hpp"
#include "gridpose/scene.hpp"

namespace gridpose {

struct ScaleAnchorMatch {
  size_t scale_index = 0;
  int anchor = 0;
};

// A (scale, anchor) pair matches when the largest side ratio between the
// person box and the anchor stays under the threshold.
std::vector<ScaleAnchorMatch> match_anchors(const GroundTruthPerson& person,
                                            const HeadConfig& cfg);

// Cells responsible for a center given in absolute grid units: the containing
// cell plus the nearest horizontal and vertical neighbors that can represent
// the center within the decode offset range. Sub-cell position exactly 0.5
// prefers the left/top neighbor. Order: containing, horizontal, vertical.
std::vector<std::pair<int, int>> assign_cells(double cx, double cy, int gh,
                                              int gw);

struct SlotTarget {
  int i = 0, j = 0, a = 0;
  int person = -1;
  double prio = 0.0;  // co-centered box-to-anchor IoU, used for conflicts

  std::array<double, 4> box_raw{};  // encoded box target
  std::vector<double> kp_raw;       // encoded keypoint offsets, x block then y

  // Decoded-space targets. Box center/size in absolute grid units; keypoints
  // in absolute grid units after range clamping.
  double cx = 0, cy = 0, w = 0, h = 0;
  Rect box_px;
  std::vector<double> kpx, kpy;
  std::vector<int> delta;
  std::vector<int> kp_clamped;  // per keypoint: 1 if either axis was clamped
  int box_clamped = 0;          // 1 if the center offset sat on the open bound
};

struct ScaleTargets {
  GridGeom geom;
  double omega = 1.0;
  std::vector<SlotTarget> slots;  // ascending slot index
  ad::Tensor vis_target;          // [gh,gw,na,K] constant
};

struct TargetSet {
  std::vector<ScaleTargets> scales;
  std::vector<int> skipped;     // scene indices excluded from supervision
  int clamped_keypoints = 0;    // keypoints clamped into the open range
};

// Builds supervision for one scene. Persons are excluded (and reported in the
// skip list) when the box has no area, no keypoint is visible, or the box
// center lies outside the image; every remaining person competes for slots at
// each matched (scale, anchor), conflicts won by larger box-to-anchor IoU and
// by earlier scene order on ties.
TargetSet build_targets(const std::vector<GroundTruthPerson>& scene,
                        const HeadConfig& cfg);

}  // namespace gridpose
