#pragma once

#include <vector>

#include "gridpose/common.hpp"

namespace gridpose {

// One annotated person. Box and keypoints are in pixels; delta flags mark
// keypoint visibility (1 visible, 0 occluded or absent).
struct GroundTruthPerson {
  Rect box;
  std::vector<Point> keypoints;
  std::vector<int> delta;

  int k() const { return static_cast<int>(keypoints.size()); }
  int visible_count() const {
    int n = 0;
    for (int d : delta) n += (d != 0);
    return n;
  }
  void validate(int expected_k) const {
    require(static_cast<int>(keypoints.size()) == expected_k &&
                static_cast<int>(delta.size()) == expected_k,
            "GroundTruthPerson: keypoint and flag counts must equal K");
    for (int d : delta)
      require(d == 0 || d == 1, "GroundTruthPerson: flags must be 0 or 1");
  }
};

}  // namespace gridpose
