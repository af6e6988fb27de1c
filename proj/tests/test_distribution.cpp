#include <cmath>
#include <vector>

#include "doctest.h"
#include "gridpose/distribution.hpp"
#include "gridpose/gradcheck.hpp"

using namespace gridpose;

TEST_CASE("gaussian value at center, at one sigma, and beyond truncation") {
  CHECK(gaussian_at(3.5, 2.5, 3.5, 2.5, 1.0, 2.0) == 1.0);

  // Euclidean distance sigma_g from the center.
  double v = gaussian_at(3.5 + 2.0, 2.5, 3.5, 2.5, 0.8, 2.0);
  CHECK(v == doctest::Approx(0.485225).epsilon(1e-6));
  CHECK(v == doctest::Approx(0.8 * std::exp(-0.5)).epsilon(1e-12));

  CHECK(gaussian_at(3.5 + 3.5 * 2.0, 2.5, 3.5, 2.5, 1.0, 2.0) == 0.0);
  CHECK(gaussian_at(3.5, 2.5 - 3.5 * 2.0, 3.5, 2.5, 1.0, 2.0) == 0.0);

  // Per-axis truncation: both axis offsets at 2.5 sigma stay inside the box
  // even though the Euclidean distance exceeds 3 sigma.
  double diag = gaussian_at(3.5 + 5.0, 2.5 + 5.0, 3.5, 2.5, 1.0, 2.0);
  CHECK(diag > 0.0);

  CHECK_THROWS_AS(gaussian_at(0, 0, 0, 0, 1.0, 0.0), ContractViolation);
  CHECK_THROWS_AS(gaussian_at(0, 0, 0, 0, 1.5, 1.0), ContractViolation);
  CHECK_THROWS_AS(gaussian_at(0, 0, std::nan(""), 0, 1.0, 1.0), ContractViolation);
}

TEST_CASE("keypoint_to_gaussian samples cell centers and truncates") {
  // Center exactly on the cell-center lattice.
  auto m = keypoint_to_gaussian(6, 8, 3.5, 2.5, 1.0, 1.0);
  REQUIRE(m.size() == 48);
  CHECK(m[2 * 8 + 3] == 1.0);
  CHECK(m[2 * 8 + 4] == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(m[3 * 8 + 3] == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(m[2 * 8 + 7] == 0.0);  // |u - cx| = 4 > 3 sigma

  for (double x : m) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }

  // Every cell agrees with the pointwise definition.
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 8; ++j)
      CHECK(m[i * 8 + j] ==
            doctest::Approx(gaussian_at(j + 0.5, i + 0.5, 3.5, 2.5, 1.0, 1.0))
                .epsilon(1e-12));

  // A center far outside the map leaves it empty.
  auto empty = keypoint_to_gaussian(6, 8, -50.0, 2.5, 1.0, 1.0);
  for (double x : empty) CHECK(x == 0.0);
}

TEST_CASE("merge_max values") {
  auto a = keypoint_to_gaussian(1, 5, 0.5, 0.5, 1.0, 1.0);
  auto b = keypoint_to_gaussian(1, 5, 2.5, 0.5, 1.0, 1.0);

  auto ab = merge_max({a, b}, 1, 5);
  auto ba = merge_max({b, a}, 1, 5);
  CHECK(ab == ba);

  // Midpoint cell lies one unit from both centers.
  CHECK(ab[1] == doctest::Approx(0.606531).epsilon(1e-6));
  CHECK(ab[1] == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

  CHECK(merge_max({a}, 1, 5) == a);
  CHECK(merge_max({a, a}, 1, 5) == a);
  auto none = merge_max({}, 1, 5);
  for (double x : none) CHECK(x == 0.0);

  auto abc = merge_max({merge_max({a, b}, 1, 5), a}, 1, 5);
  CHECK(abc == merge_max({a, merge_max({b, a}, 1, 5)}, 1, 5));

  CHECK_THROWS_AS(merge_max({std::vector<double>(3, 0.0)}, 1, 5), ContractViolation);
}

TEST_CASE("differentiable gaussian map matches the plain evaluation") {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    double cx = rng.uniform(-2.0, 10.0);
    double cy = rng.uniform(-2.0, 8.0);
    double peak = rng.uniform(0.05, 1.0);
    double sig = rng.uniform(0.5, 3.0);
    auto plain = keypoint_to_gaussian(6, 8, cx, cy, peak, sig);
    ad::Tensor m = keypoint_to_gaussian_ad(6, 8, ad::Tensor::scalar(cx),
                                           ad::Tensor::scalar(cy),
                                           ad::Tensor::scalar(peak), sig);
    REQUIRE(m.shape() == ad::Shape{6, 8});
    for (size_t f = 0; f < plain.size(); ++f)
      CHECK(m.value_at(f) == doctest::Approx(plain[f]).epsilon(1e-12));
  }
  ad::Graph::active().clear();
}

TEST_CASE("gaussian map gradients away from the truncation boundary") {
  Rng rng(32);
  for (int t = 0; t < 5; ++t) {
    ad::Tensor cx = ad::Tensor::variable({}, {rng.uniform(1.3, 4.2)});
    ad::Tensor cy = ad::Tensor::variable({}, {rng.uniform(1.3, 4.2)});
    ad::Tensor peak = ad::Tensor::variable({}, {rng.uniform(0.2, 0.9)});
    // sigma 3 puts the truncation box outside a 6x6 map for these centers,
    // so no finite-difference step can cross the support boundary.
    auto f = [&]() {
      ad::Tensor m = keypoint_to_gaussian_ad(6, 6, cx, cy, peak, 3.0);
      return ad::sum(ad::square(m));
    };
    auto rep = ad::gradcheck(f, {cx, cy, peak}, 1e-5, 1e-4);
    CHECK(rep.pass);
  }
  ad::Graph::active().clear();
}

namespace {

DecodedGrid make_decoded(const GridGeom& g, Rng& rng, double span) {
  const int64_t n = g.slots();
  std::vector<double> obj(n), kx(n * g.k), ky(n * g.k);
  for (int i = 0; i < g.gh; ++i)
    for (int j = 0; j < g.gw; ++j)
      for (int a = 0; a < g.na(); ++a) {
        const int64_t s = g.slot_index(i, j, a);
        obj[s] = rng.uniform(0.05, 0.95);
        for (int k = 0; k < g.k; ++k) {
          kx[s * g.k + k] = j + rng.uniform(-span, span);
          ky[s * g.k + k] = i + rng.uniform(-span, span);
        }
      }
  DecodedGrid dg;
  dg.obj_prob = ad::Tensor::variable({g.gh, g.gw, g.na(), 1}, obj);
  dg.kx = ad::Tensor::variable({g.gh, g.gw, g.na(), g.k}, kx);
  dg.ky = ad::Tensor::variable({g.gh, g.gw, g.na(), g.k}, ky);
  // cx/cy/w/h are not consumed by the distribution pipeline.
  dg.cx = dg.obj_prob;
  dg.cy = dg.obj_prob;
  dg.w = dg.obj_prob;
  dg.h = dg.obj_prob;
  return dg;
}

}  // namespace

TEST_CASE("distribution maps equal an independent per-channel merge") {
  GridGeom g;
  g.stride = 8;
  g.gh = 5;
  g.gw = 6;
  g.anchors = {Anchor{24.0, 48.0}, Anchor{48.0, 48.0}};
  g.k = 3;
  Rng rng(41);
  DecodedGrid dg = make_decoded(g, rng, 3.0);
  const double sig = 1.3;

  ad::Tensor D = distribution_maps(dg, g, sig);
  REQUIRE(D.shape() == ad::Shape{5, 6, 2, 3});

  for (int a = 0; a < g.na(); ++a)
    for (int k = 0; k < g.k; ++k) {
      std::vector<std::vector<double>> contribs;
      for (int i = 0; i < g.gh; ++i)
        for (int j = 0; j < g.gw; ++j) {
          const int64_t s = g.slot_index(i, j, a);
          contribs.push_back(keypoint_to_gaussian(
              g.gh, g.gw, dg.kx.value_at(s * g.k + k),
              dg.ky.value_at(s * g.k + k), dg.obj_prob.value_at(s), sig));
        }
      auto want = merge_max(contribs, g.gh, g.gw);
      for (int i = 0; i < g.gh; ++i)
        for (int j = 0; j < g.gw; ++j) {
          const int64_t f =
              ((static_cast<int64_t>(i) * g.gw + j) * g.na() + a) * g.k + k;
          CHECK(D.value_at(f) ==
                doctest::Approx(want[i * g.gw + j]).epsilon(1e-12));
        }
    }
  ad::Graph::active().clear();
}

TEST_CASE("distribution map values stay within the objectness range") {
  GridGeom g;
  g.stride = 8;
  g.gh = 4;
  g.gw = 4;
  g.anchors = {Anchor{32.0, 64.0}};
  g.k = 2;
  Rng rng(42);
  DecodedGrid dg = make_decoded(g, rng, 2.0);
  ad::Tensor D = distribution_maps(dg, g, 2.0);
  double pmax = 0.0;
  for (int64_t s = 0; s < g.slots(); ++s)
    pmax = std::max(pmax, dg.obj_prob.value_at(s));
  for (int64_t f = 0; f < D.size(); ++f) {
    CHECK(D.value_at(f) >= 0.0);
    CHECK(D.value_at(f) <= pmax + 1e-15);
  }
  ad::Graph::active().clear();
}

TEST_CASE("distribution maps are differentiable through the decoded grid") {
  GridGeom g;
  g.stride = 8;
  g.gh = 2;
  g.gw = 2;
  g.anchors = {Anchor{16.0, 16.0}};
  g.k = 1;
  Rng rng(43);
  // sigma 4: the truncation box spans 24 grid units, far wider than the map,
  // so the mask stays full for every contribution and cannot flip under the
  // finite-difference step.
  std::vector<double> raw(g.slots() * g.no());
  for (double& x : raw) x = rng.uniform(-1.5, 1.5);
  ad::Tensor rawT = ad::Tensor::variable({g.gh, g.gw, 1, g.no()}, raw);
  auto f = [&]() {
    DecodedGrid dg = decode_grid(rawT, g);
    return ad::sum(ad::square(distribution_maps(dg, g, 4.0)));
  };
  auto rep = ad::gradcheck(f, {rawT}, 1e-5, 1e-4);
  CHECK(rep.pass);
  ad::Graph::active().clear();
}

TEST_CASE("distribution maps skip keypoints far outside the grid") {
  GridGeom g;
  g.stride = 8;
  g.gh = 3;
  g.gw = 3;
  g.anchors = {Anchor{32.0, 64.0}};
  g.k = 1;
  const int64_t n = g.slots();
  std::vector<double> obj(n, 0.9), kx(n, -100.0), ky(n, -100.0);
  DecodedGrid dg;
  dg.obj_prob = ad::Tensor::variable({3, 3, 1, 1}, obj);
  dg.kx = ad::Tensor::variable({3, 3, 1, 1}, kx);
  dg.ky = ad::Tensor::variable({3, 3, 1, 1}, ky);
  dg.cx = dg.obj_prob;
  dg.cy = dg.obj_prob;
  dg.w = dg.obj_prob;
  dg.h = dg.obj_prob;
  ad::Tensor D = distribution_maps(dg, g, 2.0);
  for (int64_t f = 0; f < D.size(); ++f) CHECK(D.value_at(f) == 0.0);
  ad::Graph::active().clear();
}

TEST_CASE("target visibility maps") {
  GridGeom g;
  g.stride = 8;
  g.gh = 4;
  g.gw = 6;
  g.anchors = {Anchor{32.0, 64.0}, Anchor{48.0, 48.0}};
  g.k = 2;

  GroundTruthPerson p1;
  p1.box = Rect{4.0, 4.0, 16.0, 24.0};
  p1.keypoints = {Point{12.0, 12.0}, Point{20.0, 28.0}};  // grid (1.5,1.5), (2.5,3.5)
  p1.delta = {1, 0};

  SUBCASE("single visible keypoint peaks at its cell with value 1") {
    ad::Tensor V = target_visibility({p1}, g, 1.0);
    REQUIRE(V.shape() == ad::Shape{4, 6, 2, 2});
    // Channel 0 peak at cell (1,1); channel 1 empty (flagged invisible).
    for (int a = 0; a < 2; ++a) {
      CHECK(V.value_at(((1 * 6 + 1) * 2 + a) * 2 + 0) == 1.0);
      CHECK(V.value_at(((1 * 6 + 2) * 2 + a) * 2 + 0) ==
            doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    }
    double ch1 = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 6; ++j)
        for (int a = 0; a < 2; ++a)
          ch1 += V.value_at(((i * 6 + j) * 2 + a) * 2 + 1);
    CHECK(ch1 == 0.0);
    CHECK_FALSE(V.requires_grad());
  }

  SUBCASE("all flags zero give all-zero maps") {
    GroundTruthPerson p = p1;
    p.delta = {0, 0};
    ad::Tensor V = target_visibility({p}, g, 1.0);
    for (int64_t f = 0; f < V.size(); ++f) CHECK(V.value_at(f) == 0.0);
  }

  SUBCASE("two same-class keypoints merge with the midpoint ridge value") {
    GroundTruthPerson p2 = p1;
    p2.keypoints[0] = Point{28.0, 12.0};  // two grid cells right of p1's
    ad::Tensor V = target_visibility({p1, p2}, g, 1.0);
    CHECK(V.value_at(((1 * 6 + 2) * 2 + 0) * 2 + 0) ==
          doctest::Approx(0.606531).epsilon(1e-6));
    // Anchors carry identical channels.
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 6; ++j)
        for (int k = 0; k < 2; ++k)
          CHECK(V.value_at(((i * 6 + j) * 2 + 0) * 2 + k) ==
                V.value_at(((i * 6 + j) * 2 + 1) * 2 + k));
  }

  SUBCASE("keypoint outside the image truncates at borders without error") {
    GroundTruthPerson p = p1;
    p.keypoints[0] = Point{-4.0, 12.0};  // grid (-0.5, 1.5)
    ad::Tensor V = target_visibility({p}, g, 1.0);
    CHECK(V.value_at(((1 * 6 + 0) * 2 + 0) * 2 + 0) ==
          doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  }

  SUBCASE("malformed ground truth is rejected") {
    GroundTruthPerson bad = p1;
    bad.delta = {1, 1, 1};
    CHECK_THROWS_AS(target_visibility({bad}, g, 1.0), ContractViolation);
    bad = p1;
    bad.delta = {2, 0};
    CHECK_THROWS_AS(target_visibility({bad}, g, 1.0), ContractViolation);
  }
}
