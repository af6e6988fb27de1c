#pragma once

#include <vector>

#include "gridpose/grid.hpp"
#include "gridpose/scene.hpp"
#include "gridpose/tensor.hpp"

namespace gridpose {

// Gaussian bump value at one sample point (u,v), center (cx,cy), all in grid
// units. Zero outside the per-axis truncation |u-cx| <= 3*sigma_g (both axes).
double gaussian_at(double u, double v, double cx, double cy, double peak,
                   double sigma_g);

// Single-keypoint map over a gh x gw grid, row-major, sampled at cell centers
// (col+0.5, row+0.5).
std::vector<double> keypoint_to_gaussian(int gh, int gw, double cx, double cy,
                                         double peak, double sigma_g);

// Elementwise maximum over maps of equal size; empty input gives a zero map.
std::vector<double> merge_max(const std::vector<std::vector<double>>& maps,
                              int gh, int gw);

// Differentiable single-keypoint map. cx, cy, peak are size-1 tensors; the
// truncation mask is computed from their current values and enters the graph
// as a constant, so no gradient flows through the support boundary.
ad::Tensor keypoint_to_gaussian_ad(int gh, int gw, const ad::Tensor& cx,
                                   const ad::Tensor& cy, const ad::Tensor& peak,
                                   double sigma_g);

// Keypoint distribution maps [gh,gw,na,K] for one scale: channel (a,k) is the
// max-merge over all cells' contributions, each centered at that slot's
// regressed keypoint with the slot's objectness as peak. Contributions whose
// truncated support misses the map entirely are skipped.
ad::Tensor distribution_maps(const DecodedGrid& dg, const GridGeom& geom,
                             double sigma_g);

// Target visibility maps [gh,gw,na,K] for one scale, built from ground-truth
// keypoints (pixels) with peak 1; flagged-invisible keypoints contribute
// nothing. Channels are identical across anchors. The result is a constant.
ad::Tensor target_visibility(const std::vector<GroundTruthPerson>& gts,
                             const GridGeom& geom, double sigma_g);

}  // namespace gridpose
