#include "gridpose/distribution.hpp"

#include <algorithm>
#include <cmath>

namespace gridpose {

namespace {

// Per-axis truncated support of a bump centered at c over cell centers
// 0.5, 1.5, ..., n-0.5: the closed index range [lo, hi], empty when lo > hi.
void support_range(double c, double sigma_g, int n, int& lo, int& hi) {
  lo = static_cast<int>(std::ceil(c - 3.0 * sigma_g - 0.5));
  hi = static_cast<int>(std::floor(c + 3.0 * sigma_g - 0.5));
  lo = std::max(lo, 0);
  hi = std::min(hi, n - 1);
}

}  // namespace

double gaussian_at(double u, double v, double cx, double cy, double peak,
                   double sigma_g) {
  require(sigma_g > 0.0, "gaussian_at: sigma_g must be positive");
  require(peak >= 0.0 && peak <= 1.0, "gaussian_at: peak must lie in [0,1]");
  require(std::isfinite(cx) && std::isfinite(cy), "gaussian_at: non-finite center");
  if (std::abs(u - cx) > 3.0 * sigma_g || std::abs(v - cy) > 3.0 * sigma_g)
    return 0.0;
  const double d2 = (u - cx) * (u - cx) + (v - cy) * (v - cy);
  return peak * std::exp(-d2 / (2.0 * sigma_g * sigma_g));
}

std::vector<double> keypoint_to_gaussian(int gh, int gw, double cx, double cy,
                                         double peak, double sigma_g) {
  require(sigma_g > 0.0, "keypoint_to_gaussian: sigma_g must be positive");
  require(gh > 0 && gw > 0, "keypoint_to_gaussian: empty grid");
  require(std::isfinite(cx) && std::isfinite(cy),
          "keypoint_to_gaussian: non-finite center");
  require(peak >= 0.0 && peak <= 1.0, "keypoint_to_gaussian: peak must lie in [0,1]");
  std::vector<double> out(static_cast<size_t>(gh) * gw, 0.0);
  int jlo, jhi, ilo, ihi;
  support_range(cx, sigma_g, gw, jlo, jhi);
  support_range(cy, sigma_g, gh, ilo, ihi);
  for (int i = ilo; i <= ihi; ++i)
    for (int j = jlo; j <= jhi; ++j)
      out[static_cast<size_t>(i) * gw + j] =
          gaussian_at(j + 0.5, i + 0.5, cx, cy, peak, sigma_g);
  return out;
}

std::vector<double> merge_max(const std::vector<std::vector<double>>& maps,
                              int gh, int gw) {
  require(gh > 0 && gw > 0, "merge_max: empty grid");
  const size_t n = static_cast<size_t>(gh) * gw;
  std::vector<double> out(n, 0.0);
  for (const auto& m : maps) {
    require(m.size() == n, "merge_max: map size mismatch");
    for (size_t i = 0; i < n; ++i) out[i] = std::max(out[i], m[i]);
  }
  return out;
}

ad::Tensor keypoint_to_gaussian_ad(int gh, int gw, const ad::Tensor& cx,
                                   const ad::Tensor& cy, const ad::Tensor& peak,
                                   double sigma_g) {
  require(sigma_g > 0.0, "keypoint_to_gaussian_ad: sigma_g must be positive");
  require(gh > 0 && gw > 0, "keypoint_to_gaussian_ad: empty grid");
  require(cx.defined() && cx.size() == 1 && cy.defined() && cy.size() == 1 &&
              peak.defined() && peak.size() == 1,
          "keypoint_to_gaussian_ad: cx, cy, peak must be size-1 tensors");
  const ad::Shape map_shape{gh, gw};
  const double cxv = cx.value();
  const double cyv = cy.value();
  if (!std::isfinite(cxv) || !std::isfinite(cyv) || !std::isfinite(peak.value()))
    throw NumericalFailure("keypoint_to_gaussian_ad: non-finite center or peak");
  int jlo, jhi, ilo, ihi;
  support_range(cxv, sigma_g, gw, jlo, jhi);
  support_range(cyv, sigma_g, gh, ilo, ihi);
  if (jlo > jhi || ilo > ihi) return ad::Tensor::constant(map_shape, 0.0);

  const size_t n = static_cast<size_t>(gh) * gw;
  std::vector<double> us(n), vs(n), mask(n, 0.0);
  bool full = true;
  for (int i = 0; i < gh; ++i)
    for (int j = 0; j < gw; ++j) {
      const size_t f = static_cast<size_t>(i) * gw + j;
      us[f] = j + 0.5;
      vs[f] = i + 0.5;
      const bool in = i >= ilo && i <= ihi && j >= jlo && j <= jhi;
      mask[f] = in ? 1.0 : 0.0;
      full = full && in;
    }
  ad::Tensor U = ad::Tensor::constant(map_shape, std::move(us));
  ad::Tensor V = ad::Tensor::constant(map_shape, std::move(vs));
  ad::Tensor du = U - cx;
  ad::Tensor dv = V - cy;
  ad::Tensor bump = ad::exp((ad::square(du) + ad::square(dv)) *
                            (-1.0 / (2.0 * sigma_g * sigma_g))) *
                    peak;
  if (full) return bump;
  return bump * ad::Tensor::constant(map_shape, std::move(mask));
}

ad::Tensor distribution_maps(const DecodedGrid& dg, const GridGeom& geom,
                             double sigma_g) {
  require(sigma_g > 0.0, "distribution_maps: sigma_g must be positive");
  const int gh = geom.gh, gw = geom.gw, na = geom.na(), K = geom.k;
  require(dg.kx.defined() && dg.kx.shape() == ad::Shape{gh, gw, na, K} &&
              dg.ky.shape() == ad::Shape{gh, gw, na, K} &&
              dg.obj_prob.shape() == ad::Shape{gh, gw, na, 1},
          "distribution_maps: decoded grid does not match geometry");

  std::vector<ad::Tensor> channels;
  channels.reserve(static_cast<size_t>(na) * K);
  for (int a = 0; a < na; ++a)
    for (int k = 0; k < K; ++k) {
      ad::Tensor base = ad::Tensor::constant(ad::Shape{gh, gw}, 0.0);
      for (int i = 0; i < gh; ++i)
        for (int j = 0; j < gw; ++j) {
          const int64_t s = geom.slot_index(i, j, a);
          const double cxv = dg.kx.value_at(s * K + k);
          const double cyv = dg.ky.value_at(s * K + k);
          if (!std::isfinite(cxv) || !std::isfinite(cyv))
            throw NumericalFailure("distribution_maps: non-finite keypoint coordinate");
          int jlo, jhi, ilo, ihi;
          support_range(cxv, sigma_g, gw, jlo, jhi);
          support_range(cyv, sigma_g, gh, ilo, ihi);
          if (jlo > jhi || ilo > ihi) continue;
          ad::Tensor contrib = keypoint_to_gaussian_ad(
              gh, gw, ad::select(dg.kx, s * K + k), ad::select(dg.ky, s * K + k),
              ad::select(dg.obj_prob, s), sigma_g);
          base = ad::max_elementwise(base, contrib);
        }
      channels.push_back(ad::reshape(base, ad::Shape{gh * gw, 1}));
    }
  return ad::reshape(ad::concat_last(channels), ad::Shape{gh, gw, na, K});
}

ad::Tensor target_visibility(const std::vector<GroundTruthPerson>& gts,
                             const GridGeom& geom, double sigma_g) {
  require(sigma_g > 0.0, "target_visibility: sigma_g must be positive");
  const int gh = geom.gh, gw = geom.gw, na = geom.na(), K = geom.k;
  const double s = geom.stride;

  // Per-keypoint-channel map shared by every anchor.
  std::vector<std::vector<double>> channel(
      K, std::vector<double>(static_cast<size_t>(gh) * gw, 0.0));
  for (const GroundTruthPerson& gt : gts) {
    gt.validate(K);
    for (int k = 0; k < K; ++k) {
      if (gt.delta[k] == 0) continue;
      std::vector<double> m = keypoint_to_gaussian(
          gh, gw, gt.keypoints[k].x / s, gt.keypoints[k].y / s, 1.0, sigma_g);
      auto& c = channel[k];
      for (size_t f = 0; f < c.size(); ++f) c[f] = std::max(c[f], m[f]);
    }
  }

  std::vector<double> out(static_cast<size_t>(gh) * gw * na * K);
  for (int i = 0; i < gh; ++i)
    for (int j = 0; j < gw; ++j)
      for (int a = 0; a < na; ++a)
        for (int k = 0; k < K; ++k)
          out[((static_cast<size_t>(i) * gw + j) * na + a) * K + k] =
              channel[k][static_cast<size_t>(i) * gw + j];
  return ad::Tensor::constant(ad::Shape{gh, gw, na, K}, std::move(out));
}

}  // namespace gridpose
