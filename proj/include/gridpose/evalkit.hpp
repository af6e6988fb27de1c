#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridpose/common.hpp"
#include "gridpose/postprocess.hpp"
#include "gridpose/scene.hpp"
#include "gridpose/tensor.hpp"

namespace gridpose {

struct OksConfig {
  std::vector<double> kappas;  // one positive constant per keypoint

  void validate() const;
  // COCO's published per-keypoint constants (doubled dispersion sigmas, so
  // exp(-d^2/(2 area kappa^2)) matches that protocol) when k is 17; a uniform
  // 0.1 otherwise.
  static OksConfig standard(int k);
};

// Mean over labeled keypoints of exp(-d_k^2 / (2 area kappa_k^2)), area taken
// from the ground-truth box. Undefined without a labeled keypoint.
double oks(const std::vector<Point>& pred, const GroundTruthPerson& gt,
           const OksConfig& cfg);

struct PrCurve {
  double threshold = 0.0;
  std::vector<double> precision;  // 101 samples at recall 0.00, 0.01, .. 1.00
  double max_recall = 0.0;
  double ap = 0.0;
};

struct MetricReport {
  double ap = 0.0;  // mean AP over thresholds 0.50:0.05:0.95
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ap_medium = 0.0;  // gt area in [32^2, 96^2]
  double ap_large = 0.0;   // gt area above 96^2
  double ar = 0.0;         // mean max-recall over thresholds
  std::vector<PrCurve> curves;  // all areas, one per threshold
};

// Greedy matching per image: predictions in descending score order, each
// taking the unmatched ground truth with the highest OKS when that reaches
// the threshold. Area-band metrics ignore out-of-band ground truths and the
// predictions they absorb rather than counting them as errors.
MetricReport evaluate(const std::vector<std::vector<PersonInstance>>& preds,
                      const std::vector<std::vector<GroundTruthPerson>>& gts,
                      const OksConfig& cfg);

std::string metric_report_csv(const MetricReport& rep);

struct InfeasibleScene : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A generated scene: persons plus the stimulus image the model reads. The
// image holds one blob channel per keypoint (visible keypoints only) and a
// final box-fill channel, values in [0,1].
struct SyntheticScene {
  int image_h = 0;
  int image_w = 0;
  uint64_t seed = 0;
  std::vector<GroundTruthPerson> persons;
  ad::Tensor image;  // [h, w, k+1] constant
};

struct SceneConfig {
  int image_h = 64;
  int image_w = 64;
  int n_persons = 2;
  int k = 5;
  double occlusion_rate = 0.3;
  double blob_sigma = 1.5;   // pixels
  double max_overlap = 0.3;  // pairwise box IoU bound during placement

  void validate() const;
};

// Deterministic per seed. Every person keeps at least one visible keypoint;
// placement retries a bounded number of times before giving up.
SyntheticScene gen_scene(uint64_t seed, const SceneConfig& cfg);

}  // namespace gridpose
