#include "gridpose/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace gridpose {

void OksConfig::validate() const {
  require(!kappas.empty(), "OKS needs at least one keypoint constant");
  for (double k : kappas) require(k > 0.0, "OKS constants must be positive");
}

OksConfig OksConfig::standard(int k) {
  require(k >= 1, "OKS needs at least one keypoint");
  OksConfig cfg;
  if (k == 17) {
    const double sigmas[17] = {0.026, 0.025, 0.025, 0.035, 0.035, 0.079,
                               0.079, 0.072, 0.072, 0.062, 0.062, 0.107,
                               0.107, 0.087, 0.087, 0.089, 0.089};
    for (double s : sigmas) cfg.kappas.push_back(2.0 * s);
  } else {
    cfg.kappas.assign(size_t(k), 0.1);
  }
  return cfg;
}

double oks(const std::vector<Point>& pred, const GroundTruthPerson& gt,
           const OksConfig& cfg) {
  cfg.validate();
  size_t k = cfg.kappas.size();
  require(pred.size() == k, "prediction keypoint count disagrees with OKS");
  gt.validate(k);
  double area = gt.box.area();
  require(area > 0.0, "ground truth box has no area");
  int labeled = 0;
  double acc = 0.0;
  for (size_t i = 0; i < k; ++i) {
    if (gt.delta[i] == 0) continue;
    ++labeled;
    double dx = pred[i].x - gt.keypoints[i].x;
    double dy = pred[i].y - gt.keypoints[i].y;
    double kap = cfg.kappas[i];
    acc += std::exp(-(dx * dx + dy * dy) / (2.0 * area * kap * kap));
  }
  if (labeled == 0)
    throw DomainError("OKS is undefined without a labeled keypoint");
  return acc / labeled;
}

namespace {

// Ground-truth area band; `lo_strict` separates the large band (area > lo)
// from the inclusive medium band.
struct Band {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  bool lo_strict = true;

  bool contains(double area) const {
    return (lo_strict ? area > lo : area >= lo) && area <= hi;
  }
};

struct RankedFlag {
  double score = 0.0;
  int tp = 0;
};

PrCurve make_curve(double threshold, const std::vector<RankedFlag>& ranked,
                   int64_t n_gt) {
  PrCurve c;
  c.threshold = threshold;
  c.precision.assign(101, 0.0);
  if (n_gt > 0 && !ranked.empty()) {
    size_t n = ranked.size();
    std::vector<double> rec(n), prec(n);
    int64_t tp = 0, fp = 0;
    for (size_t i = 0; i < n; ++i) {
      (ranked[i].tp ? tp : fp) += 1;
      rec[i] = double(tp) / double(n_gt);
      prec[i] = double(tp) / double(tp + fp);
    }
    // Right-to-left maximum turns the raw points into the usual staircase
    // envelope; recall is non-decreasing, so sampling scans forward once.
    for (size_t i = n - 1; i-- > 0;) prec[i] = std::max(prec[i], prec[i + 1]);
    size_t idx = 0;
    for (int j = 0; j <= 100; ++j) {
      double r = double(j) / 100.0;
      while (idx < n && rec[idx] < r) ++idx;
      c.precision[size_t(j)] = idx < n ? prec[idx] : 0.0;
    }
    c.max_recall = rec.back();
  }
  c.ap = std::accumulate(c.precision.begin(), c.precision.end(), 0.0) / 101.0;
  return c;
}

struct BandResult {
  std::vector<PrCurve> curves;
  double ap = 0.0;
  double ar = 0.0;
};

BandResult eval_band(const std::vector<std::vector<PersonInstance>>& preds,
                     const std::vector<std::vector<GroundTruthPerson>>& gts,
                     const OksConfig& cfg, const Band& band) {
  size_t n_images = gts.size();

  // OKS is threshold-independent; compute each image's matrix once.
  std::vector<std::vector<std::vector<double>>> oks_mat(n_images);
  std::vector<std::vector<size_t>> order(n_images);
  int64_t n_gt = 0;
  for (size_t im = 0; im < n_images; ++im) {
    const auto& ps = preds[im];
    const auto& gs = gts[im];
    for (const GroundTruthPerson& g : gs)
      if (band.contains(g.box.area())) ++n_gt;
    oks_mat[im].assign(ps.size(), std::vector<double>(gs.size(), 0.0));
    for (size_t p = 0; p < ps.size(); ++p)
      for (size_t g = 0; g < gs.size(); ++g)
        oks_mat[im][p][g] = oks(ps[p].keypoints, gs[g], cfg);
    order[im].resize(ps.size());
    std::iota(order[im].begin(), order[im].end(), size_t(0));
    std::stable_sort(order[im].begin(), order[im].end(),
                     [&](size_t a, size_t b) {
                       return ps[a].score > ps[b].score;
                     });
  }

  BandResult out;
  double ap_sum = 0.0, ar_sum = 0.0;
  for (int ti = 0; ti < 10; ++ti) {
    double t = 0.50 + 0.05 * ti;
    std::vector<RankedFlag> scored;
    for (size_t im = 0; im < n_images; ++im) {
      const auto& ps = preds[im];
      const auto& gs = gts[im];
      std::vector<char> taken(gs.size(), 0);
      for (size_t oi : order[im]) {
        const PersonInstance& p = ps[oi];
        // Best unmatched in-band ground truth first; ties keep the earliest.
        int best = -1, best_ig = -1;
        double bv = -1.0, bv_ig = -1.0;
        for (size_t g = 0; g < gs.size(); ++g) {
          if (taken[g]) continue;
          double v = oks_mat[im][oi][g];
          if (band.contains(gs[g].box.area())) {
            if (v > bv) bv = v, best = int(g);
          } else {
            if (v > bv_ig) bv_ig = v, best_ig = int(g);
          }
        }
        if (best >= 0 && bv >= t) {
          taken[size_t(best)] = 1;
          scored.push_back({p.score, 1});
        } else if (best_ig >= 0 && bv_ig >= t) {
          // Absorbed by an out-of-band ground truth: dropped from scoring.
          taken[size_t(best_ig)] = 1;
        } else if (band.contains(p.box.area())) {
          scored.push_back({p.score, 0});
        }
        // An unmatched prediction outside the band is dropped as well.
      }
    }
    // Ties across images resolve by insertion order: image, then rank.
    std::stable_sort(scored.begin(), scored.end(),
                     [](const RankedFlag& a, const RankedFlag& b) {
                       return a.score > b.score;
                     });
    PrCurve c = make_curve(t, scored, n_gt);
    ap_sum += c.ap;
    ar_sum += c.max_recall;
    out.curves.push_back(std::move(c));
  }
  out.ap = ap_sum / 10.0;
  out.ar = ar_sum / 10.0;
  return out;
}

}  // namespace

MetricReport evaluate(const std::vector<std::vector<PersonInstance>>& preds,
                      const std::vector<std::vector<GroundTruthPerson>>& gts,
                      const OksConfig& cfg) {
  cfg.validate();
  require(preds.size() == gts.size(),
          "prediction and annotation image lists disagree");
  size_t k = cfg.kappas.size();
  for (size_t im = 0; im < gts.size(); ++im) {
    for (const GroundTruthPerson& g : gts[im]) {
      g.validate(k);
      require(g.visible_count() >= 1,
              "ground truth without visible keypoints cannot be scored");
      require(g.box.area() > 0.0, "ground truth box has no area");
    }
    for (const PersonInstance& p : preds[im]) {
      require(p.keypoints.size() == k,
              "prediction keypoint count disagrees with OKS");
      require(std::isfinite(p.score) && p.score >= 0.0 && p.score <= 1.0,
              "prediction score outside [0,1]");
    }
  }

  constexpr double inf = std::numeric_limits<double>::infinity();
  MetricReport rep;
  BandResult all = eval_band(preds, gts, cfg, Band{0.0, inf, true});
  rep.ap = all.ap;
  rep.ap50 = all.curves[0].ap;
  rep.ap75 = all.curves[5].ap;
  rep.ar = all.ar;
  rep.curves = std::move(all.curves);
  rep.ap_medium =
      eval_band(preds, gts, cfg, Band{32.0 * 32.0, 96.0 * 96.0, false}).ap;
  rep.ap_large = eval_band(preds, gts, cfg, Band{96.0 * 96.0, inf, true}).ap;
  return rep;
}

std::string metric_report_csv(const MetricReport& rep) {
  char line[128];
  std::string out = "metric,value\n";
  auto row = [&](const char* name, double v) {
    std::snprintf(line, sizeof line, "%s,%.6f\n", name, v);
    out += line;
  };
  row("AP", rep.ap);
  row("AP50", rep.ap50);
  row("AP75", rep.ap75);
  row("AP_M", rep.ap_medium);
  row("AP_L", rep.ap_large);
  row("AR", rep.ar);
  for (const PrCurve& c : rep.curves) {
    std::snprintf(line, sizeof line, "AP@%.2f,%.6f\n", c.threshold, c.ap);
    out += line;
    std::snprintf(line, sizeof line, "recall@%.2f,%.6f\n", c.threshold,
                  c.max_recall);
    out += line;
  }
  return out;
}

void SceneConfig::validate() const {
  require(image_h >= 16 && image_w >= 16, "scene image too small");
  require(n_persons >= 1, "a scene needs at least one person");
  require(k >= 1 && k <= 8, "keypoint layouts are defined for 1..8 points");
  require(occlusion_rate >= 0.0 && occlusion_rate <= 1.0,
          "occlusion rate outside [0,1]");
  require(blob_sigma > 0.0, "blob sigma must be positive");
  require(max_overlap >= 0.0 && max_overlap < 1.0,
          "overlap bound outside [0,1)");
}

namespace {

// Keypoint positions relative to the person box, x right, y down: head,
// hands, feet, then torso fillers for larger k.
constexpr double kLayout[8][2] = {
    {0.5, 0.15}, {0.2, 0.45}, {0.8, 0.45}, {0.3, 0.85},
    {0.7, 0.85}, {0.5, 0.5},  {0.35, 0.65}, {0.65, 0.65},
};

}  // namespace

SyntheticScene gen_scene(uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  SyntheticScene sc;
  sc.image_h = cfg.image_h;
  sc.image_w = cfg.image_w;
  sc.seed = seed;

  const int retries = 64;
  for (int p = 0; p < cfg.n_persons; ++p) {
    bool placed = false;
    for (int attempt = 0; attempt < retries && !placed; ++attempt) {
      double w = rng.uniform(0.25, 0.44) * cfg.image_w;
      double h = rng.uniform(0.375, 0.625) * cfg.image_h;
      double cx = rng.uniform(w / 2 + 1.0, cfg.image_w - w / 2 - 1.0);
      double cy = rng.uniform(h / 2 + 1.0, cfg.image_h - h / 2 - 1.0);
      Rect box{cx - w / 2, cy - h / 2, w, h};
      bool ok = true;
      for (const GroundTruthPerson& other : sc.persons)
        if (rect_iou(box, other.box) >= cfg.max_overlap) ok = false;
      if (!ok) continue;
      GroundTruthPerson gt;
      gt.box = box;
      for (int k = 0; k < cfg.k; ++k) {
        double jx = rng.uniform(-0.05, 0.05);
        double jy = rng.uniform(-0.05, 0.05);
        gt.keypoints.push_back({box.x + (kLayout[k][0] + jx) * w,
                                box.y + (kLayout[k][1] + jy) * h});
      }
      for (int k = 0; k < cfg.k; ++k)
        gt.delta.push_back(rng.bernoulli(1.0 - cfg.occlusion_rate) ? 1 : 0);
      if (gt.visible_count() == 0)
        gt.delta[size_t(rng.uniform_int(cfg.k))] = 1;
      sc.persons.push_back(std::move(gt));
      placed = true;
    }
    if (!placed)
      throw InfeasibleScene("could not place person " + std::to_string(p) +
                            " within the overlap bound");
  }

  // Stimulus image: max-merged keypoint blobs per channel, box fill last.
  int channels = cfg.k + 1;
  std::vector<double> img(size_t(cfg.image_h) * size_t(cfg.image_w) *
                              size_t(channels),
                          0.0);
  auto at = [&](int y, int x, int c) -> double& {
    return img[(size_t(y) * size_t(cfg.image_w) + size_t(x)) *
                   size_t(channels) +
               size_t(c)];
  };
  double s2 = 2.0 * cfg.blob_sigma * cfg.blob_sigma;
  int radius = int(std::ceil(3.0 * cfg.blob_sigma));
  for (const GroundTruthPerson& gt : sc.persons) {
    for (int k = 0; k < cfg.k; ++k) {
      if (gt.delta[size_t(k)] == 0) continue;  // occluded: no stimulus
      double px = gt.keypoints[size_t(k)].x;
      double py = gt.keypoints[size_t(k)].y;
      int x0 = std::max(0, int(std::floor(px)) - radius);
      int x1 = std::min(cfg.image_w - 1, int(std::ceil(px)) + radius);
      int y0 = std::max(0, int(std::floor(py)) - radius);
      int y1 = std::min(cfg.image_h - 1, int(std::ceil(py)) + radius);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          double dx = (x + 0.5) - px;
          double dy = (y + 0.5) - py;
          double v = std::exp(-(dx * dx + dy * dy) / s2);
          at(y, x, k) = std::max(at(y, x, k), v);
        }
    }
    int bx0 = std::max(0, int(std::floor(gt.box.x)));
    int bx1 = std::min(cfg.image_w - 1, int(std::ceil(gt.box.x2())) - 1);
    int by0 = std::max(0, int(std::floor(gt.box.y)));
    int by1 = std::min(cfg.image_h - 1, int(std::ceil(gt.box.y2())) - 1);
    for (int y = by0; y <= by1; ++y)
      for (int x = bx0; x <= bx1; ++x)
        if (x + 0.5 >= gt.box.x && x + 0.5 < gt.box.x2() &&
            y + 0.5 >= gt.box.y && y + 0.5 < gt.box.y2())
          at(y, x, cfg.k) = 1.0;
  }
  sc.image = ad::Tensor::constant(
      ad::Shape{cfg.image_h, cfg.image_w, channels}, std::move(img));
  return sc;
}

}  // namespace gridpose
