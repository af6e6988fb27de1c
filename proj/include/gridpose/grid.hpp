#pragma once

#include <array>
#include <vector>

#include "gridpose/common.hpp"
#include "gridpose/tensor.hpp"

namespace gridpose {

// Prior box, pixels.
struct Anchor {
  double w = 0.0;
  double h = 0.0;
};

// Geometry of one prediction scale: a (gh x gw) cell grid of stride `stride`
// pixels, `anchors.size()` anchors per cell, K keypoints.
//
// Channel layout along the last raw-tensor axis:
//   [obj, tx, ty, tw, th, kx_1..kx_K, ky_1..ky_K]
// The keypoint x and y blocks are contiguous so the training path can slice
// each in a single op.
struct GridGeom {
  int stride = 8;
  int gh = 0;
  int gw = 0;
  std::vector<Anchor> anchors;
  int k = 0;

  int na() const { return static_cast<int>(anchors.size()); }
  int no() const { return 5 + 2 * k; }
  int64_t slots() const { return static_cast<int64_t>(gh) * gw * na(); }
  int64_t slot_index(int i, int j, int a) const {
    return (static_cast<int64_t>(i) * gw + j) * na() + a;
  }
};

// Shared structural configuration of the prediction head.
struct HeadConfig {
  int image_h = 64;
  int image_w = 64;
  int k = 5;
  std::vector<int> scales{8};
  std::vector<std::vector<Anchor>> anchors{{Anchor{32.0, 64.0}}};
  std::vector<double> omega{4.0};  // per-scale grid weight, parallel to scales
  double ratio_threshold = 4.0;    // anchor match bound
  double sigma_g = 2.0;            // Gaussian stddev of distribution maps, grid units

  static Anchor default_anchor(int s) { return {4.0 * s, 8.0 * s}; }
  static double default_omega(int s) { return 256.0 / (static_cast<double>(s) * s); }

  void validate() const;
  GridGeom geom(size_t scale_index) const;
  size_t n_scales() const { return scales.size(); }
};

struct DecodedBox {
  // Offsets and sizes in grid units. x_off, y_off lie in (-0.5, 1.5);
  // w in (0, 4*A_w/s); h in (0, 4*A_h/s).
  double x_off = 0.0;
  double y_off = 0.0;
  double w = 0.0;
  double h = 0.0;
  // Absolute center in grid units: (j + x_off, i + y_off).
  double cx = 0.0;
  double cy = 0.0;
  int stride = 0;

  Rect pixels() const {
    return Rect{stride * (cx - 0.5 * w), stride * (cy - 0.5 * h), stride * w,
                stride * h};
  }
};

struct DecodedKeypoint {
  // Offset from the cell origin in grid units, inside (+-2*A_w/s, +-2*A_h/s).
  double x_off = 0.0;
  double y_off = 0.0;
  // Absolute pixel position.
  double px = 0.0;
  double py = 0.0;
};

DecodedBox decode_box(const std::array<double, 4>& raw, const Anchor& anchor,
                      int stride, int cell_i, int cell_j);

std::vector<DecodedKeypoint> decode_keypoints(const std::vector<double>& raw,
                                              const Anchor& anchor, int stride,
                                              int cell_i, int cell_j);

// Inverse of decode_box over the open valid domain; DomainError at or beyond
// the range bounds.
std::array<double, 4> encode_box(const DecodedBox& box, const Anchor& anchor,
                                 int stride);

// Inverse of a single keypoint offset along one axis (anchor_dim = A_w or A_h).
double encode_keypoint_offset(double offset, double anchor_dim, int stride);
double decode_keypoint_offset(double raw, double anchor_dim, int stride);

struct VisLookup {
  double score = 0.0;
  bool clamped = false;
};

// Reads the visibility map at the cell containing an absolute pixel position:
// index = round(p/s - 0.5) per axis, clamped to the map bounds.
VisLookup visibility_score(const ad::Tensor& vis, const GridGeom& geom,
                           double px, double py, int a, int k);

// Training-path decode of a whole raw grid tensor [gh,gw,na,no].
// All quantities are in grid units; centers and keypoints absolute.
struct DecodedGrid {
  ad::Tensor obj_prob;  // [gh,gw,na,1]
  ad::Tensor cx, cy;    // [gh,gw,na,1]
  ad::Tensor w, h;      // [gh,gw,na,1]
  ad::Tensor kx, ky;    // [gh,gw,na,K]
};

DecodedGrid decode_grid(const ad::Tensor& raw, const GridGeom& geom);

}  // namespace gridpose
