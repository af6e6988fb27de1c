#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace gridpose {

// Precondition / shape violations. Mapped to exit code 2 by the CLI.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Math domain problems (log/sqrt of negative, non-invertible encode,
// undefined OKS). Mapped to exit code 3 by the CLI unless input-related.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values escaping a numeric routine. Exit code 3.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

// Axis-aligned pixel rectangle, top-left origin.
struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Rect {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  double x2() const { return x + w; }
  double y2() const { return y + h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
};

inline double rect_iou(const Rect& a, const Rect& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x, b.x);
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

// Shape-only IoU: both boxes centered at a common origin. Used for
// anchor matching and assignment conflict resolution.
inline double shape_iou(double aw, double ah, double bw, double bh) {
  const double inter = std::min(aw, bw) * std::min(ah, bh);
  const double uni = aw * ah + bw * bh - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

// mt19937_64 with hand-rolled variate derivations. std::*_distribution is
// implementation-defined, which would tie scene content to the standard
// library build; these stay stable anywhere the engine math is stable.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    require(n > 0, "Rng::uniform_int: n must be positive");
    return static_cast<int>(gen_() % static_cast<uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; the spare variate is discarded to keep the draw count
  // per call fixed.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

inline double logit(double p) {
  require(p > 0.0 && p < 1.0, "logit: argument must lie in (0,1)");
  return std::log(p / (1.0 - p));
}

}  // namespace gridpose
