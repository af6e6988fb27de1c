#include "gridpose/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace gridpose {

namespace {

double sig(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_finite(double v, const char* what) {
  require(std::isfinite(v), std::string(what) + ": non-finite raw value");
}

}  // namespace

void HeadConfig::validate() const {
  require(image_h > 0 && image_w > 0, "HeadConfig: image dimensions must be positive");
  require(k > 0, "HeadConfig: keypoint count must be positive");
  require(!scales.empty(), "HeadConfig: at least one scale required");
  require(anchors.size() == scales.size() && omega.size() == scales.size(),
          "HeadConfig: anchors and omega must parallel scales");
  require(ratio_threshold > 1.0, "HeadConfig: ratio_threshold must exceed 1");
  require(sigma_g > 0.0, "HeadConfig: sigma_g must be positive");
  for (size_t si = 0; si < scales.size(); ++si) {
    const int s = scales[si];
    require(s > 0 && image_h % s == 0 && image_w % s == 0,
            "HeadConfig: every scale must divide both image dimensions");
    require(!anchors[si].empty(), "HeadConfig: each scale needs at least one anchor");
    for (const Anchor& a : anchors[si])
      require(a.w > 0.0 && a.h > 0.0, "HeadConfig: anchor sides must be positive");
  }
}

GridGeom HeadConfig::geom(size_t scale_index) const {
  require(scale_index < scales.size(), "HeadConfig: scale index out of range");
  GridGeom g;
  g.stride = scales[scale_index];
  g.gh = image_h / g.stride;
  g.gw = image_w / g.stride;
  g.anchors = anchors[scale_index];
  g.k = k;
  return g;
}

DecodedBox decode_box(const std::array<double, 4>& raw, const Anchor& anchor,
                      int stride, int cell_i, int cell_j) {
  for (double v : raw) check_finite(v, "decode_box");
  require(stride > 0 && cell_i >= 0 && cell_j >= 0, "decode_box: invalid cell");
  DecodedBox b;
  b.stride = stride;
  b.x_off = 2.0 * sig(raw[0]) - 0.5;
  b.y_off = 2.0 * sig(raw[1]) - 0.5;
  const double sw = 2.0 * sig(raw[2]);
  const double sh = 2.0 * sig(raw[3]);
  b.w = anchor.w / stride * (sw * sw);
  b.h = anchor.h / stride * (sh * sh);
  b.cx = cell_j + b.x_off;
  b.cy = cell_i + b.y_off;
  return b;
}

double decode_keypoint_offset(double raw, double anchor_dim, int stride) {
  check_finite(raw, "decode_keypoints");
  return anchor_dim / stride * (4.0 * sig(raw) - 2.0);
}

std::vector<DecodedKeypoint> decode_keypoints(const std::vector<double>& raw,
                                              const Anchor& anchor, int stride,
                                              int cell_i, int cell_j) {
  require(raw.size() % 2 == 0, "decode_keypoints: raw length must be 2K");
  const size_t k = raw.size() / 2;
  std::vector<DecodedKeypoint> out(k);
  for (size_t i = 0; i < k; ++i) {
    DecodedKeypoint& kp = out[i];
    kp.x_off = decode_keypoint_offset(raw[i], anchor.w, stride);
    kp.y_off = decode_keypoint_offset(raw[k + i], anchor.h, stride);
    kp.px = stride * (cell_j + kp.x_off);
    kp.py = stride * (cell_i + kp.y_off);
  }
  return out;
}

namespace {

double invert_sigmoid_fraction(double frac, const char* what) {
  if (!(frac > 0.0 && frac < 1.0))
    throw DomainError(std::string(what) + ": value at or beyond the open range bound");
  return std::log(frac / (1.0 - frac));
}

}  // namespace

std::array<double, 4> encode_box(const DecodedBox& box, const Anchor& anchor,
                                 int stride) {
  std::array<double, 4> raw{};
  raw[0] = invert_sigmoid_fraction((box.x_off + 0.5) / 2.0, "encode_box x");
  raw[1] = invert_sigmoid_fraction((box.y_off + 0.5) / 2.0, "encode_box y");
  const double ww = box.w * stride / anchor.w;
  const double hh = box.h * stride / anchor.h;
  if (!(ww > 0.0 && ww < 4.0) || !(hh > 0.0 && hh < 4.0))
    throw DomainError("encode_box: size at or beyond the open range bound");
  raw[2] = invert_sigmoid_fraction(std::sqrt(ww) / 2.0, "encode_box w");
  raw[3] = invert_sigmoid_fraction(std::sqrt(hh) / 2.0, "encode_box h");
  return raw;
}

double encode_keypoint_offset(double offset, double anchor_dim, int stride) {
  const double range = 2.0 * anchor_dim / stride;
  if (!(offset > -range && offset < range))
    throw DomainError("encode_keypoint_offset: offset at or beyond the open range bound");
  return invert_sigmoid_fraction((offset * stride / anchor_dim + 2.0) / 4.0,
                                 "encode_keypoint_offset");
}

VisLookup visibility_score(const ad::Tensor& vis, const GridGeom& geom,
                           double px, double py, int a, int k) {
  require(a >= 0 && a < geom.na(), "visibility_score: anchor index out of range");
  require(k >= 0 && k < geom.k, "visibility_score: keypoint index out of range");
  require(vis.shape() == ad::Shape{geom.gh, geom.gw, geom.na(), geom.k},
          "visibility_score: tensor does not match grid geometry");
  VisLookup out;
  long jx = std::lround(px / geom.stride - 0.5);
  long iy = std::lround(py / geom.stride - 0.5);
  if (jx < 0 || jx >= geom.gw || iy < 0 || iy >= geom.gh) out.clamped = true;
  jx = std::clamp(jx, 0L, static_cast<long>(geom.gw - 1));
  iy = std::clamp(iy, 0L, static_cast<long>(geom.gh - 1));
  const int64_t idx =
      ((static_cast<int64_t>(iy) * geom.gw + jx) * geom.na() + a) * geom.k + k;
  out.score = vis.value_at(idx);
  return out;
}

DecodedGrid decode_grid(const ad::Tensor& raw, const GridGeom& geom) {
  require(raw.shape() == ad::Shape{geom.gh, geom.gw, geom.na(), geom.no()},
          "decode_grid: tensor does not match grid geometry");
  const int gh = geom.gh, gw = geom.gw, na = geom.na(), K = geom.k;

  // Per-slot constant fields: cell origins and anchor extents in grid units.
  const int64_t nslots = geom.slots();
  std::vector<double> col(nslots), row(nslots), aw(nslots), ah(nslots);
  for (int i = 0; i < gh; ++i)
    for (int j = 0; j < gw; ++j)
      for (int a = 0; a < na; ++a) {
        const int64_t s = geom.slot_index(i, j, a);
        col[s] = j;
        row[s] = i;
        aw[s] = geom.anchors[a].w / geom.stride;
        ah[s] = geom.anchors[a].h / geom.stride;
      }
  const ad::Shape slot_shape{gh, gw, na, 1};
  ad::Tensor colT = ad::Tensor::constant(slot_shape, std::move(col));
  ad::Tensor rowT = ad::Tensor::constant(slot_shape, std::move(row));
  ad::Tensor awT = ad::Tensor::constant(slot_shape, std::move(aw));
  ad::Tensor ahT = ad::Tensor::constant(slot_shape, std::move(ah));

  // Same fields repeated across the K keypoint channels.
  std::vector<double> colK(nslots * K), rowK(nslots * K), awK(nslots * K),
      ahK(nslots * K);
  for (int64_t s = 0; s < nslots; ++s)
    for (int kk = 0; kk < K; ++kk) {
      colK[s * K + kk] = colT.value_at(s);
      rowK[s * K + kk] = rowT.value_at(s);
      awK[s * K + kk] = awT.value_at(s);
      ahK[s * K + kk] = ahT.value_at(s);
    }
  const ad::Shape kp_shape{gh, gw, na, K};
  ad::Tensor colKT = ad::Tensor::constant(kp_shape, std::move(colK));
  ad::Tensor rowKT = ad::Tensor::constant(kp_shape, std::move(rowK));
  ad::Tensor awKT = ad::Tensor::constant(kp_shape, std::move(awK));
  ad::Tensor ahKT = ad::Tensor::constant(kp_shape, std::move(ahK));

  DecodedGrid out;
  out.obj_prob = ad::sigmoid(ad::slice_last(raw, 0, 1));
  out.cx = ad::sigmoid(ad::slice_last(raw, 1, 1)) * 2.0 - 0.5 + colT;
  out.cy = ad::sigmoid(ad::slice_last(raw, 2, 1)) * 2.0 - 0.5 + rowT;
  out.w = awT * ad::square(ad::sigmoid(ad::slice_last(raw, 3, 1)) * 2.0);
  out.h = ahT * ad::square(ad::sigmoid(ad::slice_last(raw, 4, 1)) * 2.0);
  out.kx = awKT * (ad::sigmoid(ad::slice_last(raw, 5, K)) * 4.0 - 2.0) + colKT;
  out.ky = ahKT * (ad::sigmoid(ad::slice_last(raw, 5 + K, K)) * 4.0 - 2.0) + rowKT;
  return out;
}

}  // namespace gridpose
