#pragma once

#include <vector>

#include "gridpose/common.hpp"
#include "gridpose/grid.hpp"
#include "gridpose/tensor.hpp"

namespace gridpose {

// A detected person. Keypoint filtering marks `kept`, it never drops
// entries, so renderers can show rejected keypoints too.
struct PersonInstance {
  Rect box;  // pixels
  double score = 0.0;
  std::vector<Point> keypoints;    // pixels
  std::vector<double> vis_scores;  // in [0,1]
  std::vector<bool> kept;
};

// One scale's decoded head output plus its visibility maps, values only.
struct ScalePrediction {
  DecodedGrid grid;
  ad::Tensor vis;  // [gh,gw,na,K], scores in [0,1]
  GridGeom geom;
};

struct PostprocessConfig {
  double conf_threshold = 0.25;
  double iou_threshold = 0.65;
  double vis_threshold = 0.5;

  void validate() const;
};

// Every slot whose objectness reaches conf_threshold becomes an instance,
// pooled across scales in scale then slot order. Visibility scores are read
// from the map cell nearest to each decoded keypoint; `kept` starts all true.
std::vector<PersonInstance> extract_candidates(
    const std::vector<ScalePrediction>& scales, double conf_threshold);

// Greedy suppression in descending score order, earlier input index first on
// ties. A suppressed instance never suppresses others; survivors have
// pairwise box IoU strictly under the threshold.
std::vector<PersonInstance> nms(const std::vector<PersonInstance>& instances,
                                double iou_threshold);

// Marks kept_k = vis_scores_k >= vis_threshold; idempotent.
PersonInstance filter_keypoints(const PersonInstance& instance,
                                double vis_threshold);

// extract -> nms -> filter, with the config's thresholds.
std::vector<PersonInstance> detect(const std::vector<ScalePrediction>& scales,
                                   const PostprocessConfig& cfg);

}  // namespace gridpose
