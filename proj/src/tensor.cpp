#include "gridpose/tensor.hpp"

#include <cmath>
#include <sstream>

namespace gridpose::ad {

int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    require(d > 0, "tensor shape dimensions must be positive");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

namespace {

void ensure_grad(TensorData& d) {
  if (d.grad.empty()) d.grad.assign(d.value.size(), 0.0);
}

}  // namespace

Tensor make_op_output(Shape shape, std::vector<double> values, bool track) {
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->value = std::move(values);
  d->requires_grad = track;
  return Tensor(std::move(d));
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  require(shape_size(shape) == static_cast<int64_t>(values.size()),
          "tensor data length must equal the product of its shape");
  return make_op_output(std::move(shape), std::move(values), false);
}

Tensor Tensor::constant(Shape shape, double fill) {
  std::vector<double> v(static_cast<size_t>(shape_size(shape)), fill);
  return make_op_output(std::move(shape), std::move(v), false);
}

Tensor Tensor::scalar(double v) { return constant(Shape{}, std::vector<double>{v}); }

Tensor Tensor::variable(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.d_->requires_grad = true;
  return t;
}

Tensor Tensor::variable(Shape shape, double fill) {
  Tensor t = constant(std::move(shape), fill);
  t.d_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const {
  require(defined(), "undefined tensor");
  return d_->shape;
}

int64_t Tensor::size() const {
  require(defined(), "undefined tensor");
  return static_cast<int64_t>(d_->value.size());
}

bool Tensor::requires_grad() const { return defined() && d_->requires_grad; }

const std::vector<double>& Tensor::values() const {
  require(defined(), "undefined tensor");
  return d_->value;
}

double Tensor::value() const {
  require(defined() && size() == 1, "Tensor::value: tensor is not a scalar");
  return d_->value[0];
}

double Tensor::value_at(int64_t i) const {
  require(defined() && i >= 0 && i < size(), "Tensor::value_at: index out of range");
  return d_->value[static_cast<size_t>(i)];
}

const std::vector<double>& Tensor::grad() const {
  require(defined(), "undefined tensor");
  ensure_grad(*d_);
  return d_->grad;
}

double Tensor::grad_at(int64_t i) const {
  require(defined() && i >= 0 && i < size(), "Tensor::grad_at: index out of range");
  if (d_->grad.empty()) return 0.0;
  return d_->grad[static_cast<size_t>(i)];
}

void Tensor::zero_grad() {
  require(defined(), "undefined tensor");
  std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

std::vector<double>& Tensor::mutable_values() {
  require(defined(), "undefined tensor");
  return d_->value;
}

Graph& Graph::active() {
  thread_local Graph g;
  return g;
}

int Graph::record(std::function<void()> backward_step) {
  steps_.push_back(std::move(backward_step));
  return static_cast<int>(steps_.size()) - 1;
}

void Graph::clear() { steps_.clear(); }

void Graph::run_backward_from(int node) {
  require(node >= 0 && node < static_cast<int>(steps_.size()),
          "backward: root node does not belong to the active graph");
  // Reverse execution order is a topological order of the recorded DAG:
  // every consumer of a node's output was recorded later, so by the time a
  // node runs its output gradient is complete. Each step runs exactly once.
  for (int i = node; i >= 0; --i) steps_[static_cast<size_t>(i)]();
}

NoGradGuard::NoGradGuard() { ++Graph::active().suspend_; }
NoGradGuard::~NoGradGuard() { --Graph::active().suspend_; }

void backward(const Tensor& root) {
  require(root.defined(), "backward: undefined root");
  require(root.size() == 1, "backward: root must be a scalar");
  auto d = root.ptr();
  ensure_grad(*d);
  d->grad[0] += 1.0;
  if (d->node >= 0) Graph::active().run_backward_from(d->node);
}

namespace {

bool should_track(const Tensor& a) {
  return Graph::active().recording() && a.requires_grad();
}

bool should_track(const Tensor& a, const Tensor& b) {
  return Graph::active().recording() && (a.requires_grad() || b.requires_grad());
}

void finish(Tensor& out, std::function<void()> step) {
  if (out.requires_grad()) out.ptr()->node = Graph::active().record(std::move(step));
}

struct BinaryPlan {
  int64_t n = 0;        // output element count
  bool a_scalar = false;  // broadcast a over b's shape
  bool b_scalar = false;
  const Shape* out_shape = nullptr;
};

BinaryPlan plan_binary(const Tensor& a, const Tensor& b, const char* op) {
  require(a.defined() && b.defined(), std::string(op) + ": undefined operand");
  BinaryPlan p;
  if (a.shape() == b.shape()) {
    p.n = a.size();
    p.out_shape = &a.shape();
  } else if (a.size() == 1) {
    p.a_scalar = true;
    p.n = b.size();
    p.out_shape = &b.shape();
  } else if (b.size() == 1) {
    p.b_scalar = true;
    p.n = a.size();
    p.out_shape = &a.shape();
  } else {
    throw ContractViolation(std::string(op) + ": shape mismatch " +
                            shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  return p;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const BinaryPlan p = plan_binary(a, b, "add");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> ov(static_cast<size_t>(p.n));
  for (int64_t i = 0; i < p.n; ++i)
    ov[i] = av[p.a_scalar ? 0 : i] + bv[p.b_scalar ? 0 : i];
  Tensor out = make_op_output(*p.out_shape, std::move(ov), should_track(a, b));
  finish(out, [ad = a.ptr(), bd = b.ptr(), od = out.ptr(), p]() {
    const auto& go = od->grad;
    if (go.empty()) return;
    if (ad->requires_grad) {
      ensure_grad(*ad);
      for (int64_t i = 0; i < p.n; ++i) ad->grad[p.a_scalar ? 0 : i] += go[i];
    }
    if (bd->requires_grad) {
      ensure_grad(*bd);
      for (int64_t i = 0; i < p.n; ++i) bd->grad[p.b_scalar ? 0 : i] += go[i];
    }
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const BinaryPlan p = plan_binary(a, b, "sub");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> ov(static_cast<size_t>(p.n));
  for (int64_t i = 0; i < p.n; ++i)
    ov[i] = av[p.a_scalar ? 0 : i] - bv[p.b_scalar ? 0 : i];
  Tensor out = make_op_output(*p.out_shape, std::move(ov), should_track(a, b));
  finish(out, [ad = a.ptr(), bd = b.ptr(), od = out.ptr(), p]() {
    const auto& go = od->grad;
    if (go.empty()) return;
    if (ad->requires_grad) {
      ensure_grad(*ad);
      for (int64_t i = 0; i < p.n; ++i) ad->grad[p.a_scalar ? 0 : i] += go[i];
    }
    if (bd->requires_grad) {
      ensure_grad(*bd);
      for (int64_t i = 0; i < p.n; ++i) bd->grad[p.b_scalar ? 0 : i] -= go[i];
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const BinaryPlan p = plan_binary(a, b, "mul");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> ov(static_cast<size_t>(p.n));
  for (int64_t i = 0; i < p.n; ++i)
    ov[i] = av[p.a_scalar ? 0 : i] * bv[p.b_scalar ? 0 : i];
  Tensor out = make_op_output(*p.out_shape, std::move(ov), should_track(a, b));
  finish(out, [ad = a.ptr(), bd = b.ptr(), od = out.ptr(), p]() {
    const auto& go = od->grad;
    if (go.empty()) return;
    if (ad->requires_grad) {
      ensure_grad(*ad);
      for (int64_t i = 0; i < p.n; ++i)
        ad->grad[p.a_scalar ? 0 : i] += go[i] * bd->value[p.b_scalar ? 0 : i];
    }
    if (bd->requires_grad) {
      ensure_grad(*bd);
      for (int64_t i = 0; i < p.n; ++i)
        bd->grad[p.b_scalar ? 0 : i] += go[i] * ad->value[p.a_scalar ? 0 : i];
    }
  });
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  const BinaryPlan p = plan_binary(a, b, "div");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> ov(static_cast<size_t>(p.n));
  for (int64_t i = 0; i < p.n; ++i)
    ov[i] = av[p.a_scalar ? 0 : i] / bv[p.b_scalar ? 0 : i];
  Tensor out = make_op_output(*p.out_shape, std::move(ov), should_track(a, b));
  finish(out, [ad = a.ptr(), bd = b.ptr(), od = out.ptr(), p]() {
    const auto& go = od->grad;
    if (go.empty()) return;
    if (ad->requires_grad) {
      ensure_grad(*ad);
      for (int64_t i = 0; i < p.n; ++i)
        ad->grad[p.a_scalar ? 0 : i] += go[i] / bd->value[p.b_scalar ? 0 : i];
    }
    if (bd->requires_grad) {
      ensure_grad(*bd);
      for (int64_t i = 0; i < p.n; ++i) {
        const double bval = bd->value[p.b_scalar ? 0 : i];
        bd->grad[p.b_scalar ? 0 : i] -=
            go[i] * ad->value[p.a_scalar ? 0 : i] / (bval * bval);
      }
    }
  });
  return out;
}

namespace {

// Shared scaffolding for elementwise unaries: forward via fwd(v), backward
// contribution via dfdv(input value, output value).
template <class F, class DF>
Tensor unary_op(const Tensor& a, const char* /*name*/, F fwd, DF dfdv) {
  const auto& av = a.values();
  const int64_t n = a.size();
  std::vector<double> ov(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) ov[i] = fwd(av[i]);
  Tensor out = make_op_output(a.shape(), std::move(ov), should_track(a));
  finish(out, [ad = a.ptr(), od = out.ptr(), dfdv, n]() {
    const auto& go = od->grad;
    if (go.empty() || !ad->requires_grad) return;
    ensure_grad(*ad);
    for (int64_t i = 0; i < n; ++i)
      ad->grad[i] += go[i] * dfdv(ad->value[i], od->value[i]);
  });
  return out;
}

}  // namespace

Tensor neg(const Tensor& a) {
  return unary_op(
      a, "neg", [](double v) { return -v; },
      [](double, double) { return -1.0; });
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, "square", [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.values())
    if (v < 0.0) throw DomainError("sqrt of negative value");
  return unary_op(
      a, "sqrt", [](double v) { return std::sqrt(v); },
      [](double, double o) { return 0.5 / o; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, "exp", [](double v) { return std::exp(v); },
      [](double, double o) { return o; });
}

Tensor log(const Tensor& a) {
  for (double v : a.values())
    if (v <= 0.0) throw DomainError("log of non-positive value");
  return unary_op(
      a, "log", [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double o) { return o * (1.0 - o); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  require(lo <= hi, "clamp: lo must not exceed hi");
  // Subgradient convention: gradient passes on the closed interval [lo, hi].
  return unary_op(
      a, "clamp",
      [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  const auto& av = a.values();
  double s = 0.0;
  for (double v : av) s += v;
  Tensor out = make_op_output(Shape{}, {s}, should_track(a));
  finish(out, [ad = a.ptr(), od = out.ptr()]() {
    const auto& go = od->grad;
    if (go.empty() || !ad->requires_grad) return;
    ensure_grad(*ad);
    for (double& g : ad->grad) g += go[0];
  });
  return out;
}

Tensor mean(const Tensor& a) {
  const auto& av = a.values();
  const double n = static_cast<double>(a.size());
  double s = 0.0;
  for (double v : av) s += v;
  Tensor out = make_op_output(Shape{}, {s / n}, should_track(a));
  finish(out, [ad = a.ptr(), od = out.ptr(), n]() {
    const auto& go = od->grad;
    if (go.empty() || !ad->requires_grad) return;
    ensure_grad(*ad);
    const double g = go[0] / n;
    for (double& gi : ad->grad) gi += g;
  });
  return out;
}

Tensor max_reduce(const Tensor& a) {
  const auto& av = a.values();
  int64_t arg = 0;
  double best = av[0];
  for (int64_t i = 1; i < a.size(); ++i)
    if (av[i] > best) {  // ties keep the lowest flat index
      best = av[i];
      arg = i;
    }
  Tensor out = make_op_output(Shape{}, {best}, should_track(a));
  finish(out, [ad = a.ptr(), od = out.ptr(), arg]() {
    const auto& go = od->grad;
    if (go.empty() || !ad->requires_grad) return;
    ensure_grad(*ad);
    ad->grad[arg] += go[0];
  });
  return out;
}

Tensor max_elementwise(const Tensor& a, const Tensor& b) {
  const BinaryPlan p = plan_binary(a, b, "max_elementwise");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> ov(static_cast<size_t>(p.n));
  std::vector<uint8_t> a_wins(static_cast<size_t>(p.n));
  for (int64_t i = 0; i < p.n; ++i) {
    const double x = av[p.a_scalar ? 0 : i];
    const double y = bv[p.b_scalar ? 0 : i];
    a_wins[i] = x >= y;  // tie routes to the first operand
    ov[i] = a_wins[i] ? x : y;
  }
  Tensor out = make_op_output(*p.out_shape, std::move(ov), should_track(a, b));
  finish(out, [ad = a.ptr(), bd = b.ptr(), od = out.ptr(), p,
               wins = std::move(a_wins)]() {
    const auto& go = od->grad;
    if (go.empty()) return;
    if (ad->requires_grad) {
      ensure_grad(*ad);
      for (int64_t i = 0; i < p.n; ++i)
        if (wins[i]) ad->grad[p.a_scalar ? 0 : i] += go[i];
    }
    if (bd->requires_grad) {
      ensure_grad(*bd);
      for (int64_t i = 0; i < p.n; ++i)
        if (!wins[i]) bd->grad[p.b_scalar ? 0 : i] += go[i];
    }
  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.defined() && b.defined(), "matmul: undefined operand");
  require(a.shape().size() == 2 && b.shape().size() == 2,
          "matmul: operands must be rank-2");
  const int m = a.shape()[0], k = a.shape()[1];
  const int k2 = b.shape()[0], n = b.shape()[1];
  require(k == k2, "matmul: inner dimensions differ " + shape_str(a.shape()) +
                       " vs " + shape_str(b.shape()));
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> ov(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < k; ++l) {
      const double x = av[i * k + l];
      const double* brow = &bv[static_cast<size_t>(l) * n];
      double* orow = &ov[static_cast<size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  Tensor out = make_op_output(Shape{m, n}, std::move(ov), should_track(a, b));
  finish(out, [ad = a.ptr(), bd = b.ptr(), od = out.ptr(), m, k, n]() {
    const auto& go = od->grad;
    if (go.empty()) return;
    if (ad->requires_grad) {
      ensure_grad(*ad);
      for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
          double s = 0.0;
          const double* grow = &go[static_cast<size_t>(i) * n];
          const double* brow = &bd->value[static_cast<size_t>(l) * n];
          for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
          ad->grad[i * k + l] += s;
        }
    }
    if (bd->requires_grad) {
      ensure_grad(*bd);
      for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
          const double x = ad->value[i * k + l];
          const double* grow = &go[static_cast<size_t>(i) * n];
          double* brow = &bd->grad[static_cast<size_t>(l) * n];
          for (int j = 0; j < n; ++j) brow[j] += x * grow[j];
        }
    }
  });
  return out;
}

Tensor conv2d_small(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.defined() && w.defined(), "conv2d_small: undefined operand");
  require(x.shape().size() == 3, "conv2d_small: input must be [H,W,Cin]");
  require(w.shape().size() == 4, "conv2d_small: weight must be [kh,kw,Cin,Cout]");
  const int H = x.shape()[0], W = x.shape()[1], Ci = x.shape()[2];
  const int kh = w.shape()[0], kw = w.shape()[1];
  const int Co = w.shape()[3];
  require(w.shape()[2] == Ci, "conv2d_small: channel mismatch");
  require(kh % 2 == 1 && kw % 2 == 1, "conv2d_small: kernel sides must be odd");
  if (b.defined())
    require(b.shape().size() == 1 && b.shape()[0] == Co,
            "conv2d_small: bias must be [Cout]");
  const int ph = kh / 2, pw = kw / 2;
  const auto& xv = x.values();
  const auto& wv = w.values();
  std::vector<double> ov(static_cast<size_t>(H) * W * Co, 0.0);
  if (b.defined()) {
    const auto& bv = b.values();
    for (int yx = 0; yx < H * W; ++yx)
      for (int co = 0; co < Co; ++co) ov[static_cast<size_t>(yx) * Co + co] = bv[co];
  }
  for (int y = 0; y < H; ++y)
    for (int xo = 0; xo < W; ++xo) {
      double* orow = &ov[(static_cast<size_t>(y) * W + xo) * Co];
      for (int ky = 0; ky < kh; ++ky) {
        const int yy = y + ky - ph;
        if (yy < 0 || yy >= H) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int xx = xo + kx - pw;
          if (xx < 0 || xx >= W) continue;
          const double* xrow = &xv[(static_cast<size_t>(yy) * W + xx) * Ci];
          const double* wbase = &wv[(static_cast<size_t>(ky) * kw + kx) * Ci * Co];
          for (int ci = 0; ci < Ci; ++ci) {
            const double xval = xrow[ci];
            if (xval == 0.0) continue;
            const double* wrow = &wbase[static_cast<size_t>(ci) * Co];
            for (int co = 0; co < Co; ++co) orow[co] += xval * wrow[co];
          }
        }
      }
    }
  const bool track =
      Graph::active().recording() &&
      (x.requires_grad() || w.requires_grad() || (b.defined() && b.requires_grad()));
  Tensor out = make_op_output(Shape{H, W, Co}, std::move(ov), track);
  finish(out, [xd = x.ptr(), wd = w.ptr(), bd = b.defined() ? b.ptr() : nullptr,
               od = out.ptr(), H, W, Ci, Co, kh, kw, ph, pw]() {
    const auto& go = od->grad;
    if (go.empty()) return;
    const bool need_x = xd->requires_grad;
    const bool need_w = wd->requires_grad;
    if (need_x) ensure_grad(*xd);
    if (need_w) ensure_grad(*wd);
    if (bd && bd->requires_grad) {
      ensure_grad(*bd);
      for (int yx = 0; yx < H * W; ++yx)
        for (int co = 0; co < Co; ++co)
          bd->grad[co] += go[static_cast<size_t>(yx) * Co + co];
    }
    if (!need_x && !need_w) return;
    for (int y = 0; y < H; ++y)
      for (int xo = 0; xo < W; ++xo) {
        const double* grow = &go[(static_cast<size_t>(y) * W + xo) * Co];
        for (int ky = 0; ky < kh; ++ky) {
          const int yy = y + ky - ph;
          if (yy < 0 || yy >= H) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int xx = xo + kx - pw;
            if (xx < 0 || xx >= W) continue;
            const size_t xoff = (static_cast<size_t>(yy) * W + xx) * Ci;
            const size_t woff = (static_cast<size_t>(ky) * kw + kx) * Ci * Co;
            for (int ci = 0; ci < Ci; ++ci) {
              const double* wrow = &wd->value[woff + static_cast<size_t>(ci) * Co];
              if (need_x) {
                double s = 0.0;
                for (int co = 0; co < Co; ++co) s += grow[co] * wrow[co];
                xd->grad[xoff + ci] += s;
              }
              if (need_w) {
                const double xval = xd->value[xoff + ci];
                if (xval != 0.0) {
                  double* gwrow = &wd->grad[woff + static_cast<size_t>(ci) * Co];
                  for (int co = 0; co < Co; ++co) gwrow[co] += xval * grow[co];
                }
              }
            }
          }
        }
      }
  });
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(a.defined(), "reshape: undefined operand");
  require(shape_size(shape) == a.size(),
          "reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
              shape_str(shape));
  Tensor out = make_op_output(std::move(shape), a.values(), should_track(a));
  finish(out, [ad = a.ptr(), od = out.ptr()]() {
    const auto& go = od->grad;
    if (go.empty() || !ad->requires_grad) return;
    ensure_grad(*ad);
    for (size_t i = 0; i < go.size(); ++i) ad->grad[i] += go[i];
  });
  return out;
}

Tensor slice_last(const Tensor& a, int offset, int count) {
  require(a.defined() && !a.shape().empty(), "slice_last: operand must have rank >= 1");
  const int last = a.shape().back();
  require(offset >= 0 && count > 0 && offset + count <= last,
          "slice_last: range out of bounds");
  const int64_t outer = a.size() / last;
  Shape oshape = a.shape();
  oshape.back() = count;
  const auto& av = a.values();
  std::vector<double> ov(static_cast<size_t>(outer) * count);
  for (int64_t o = 0; o < outer; ++o)
    for (int j = 0; j < count; ++j) ov[o * count + j] = av[o * last + offset + j];
  Tensor out = make_op_output(std::move(oshape), std::move(ov), should_track(a));
  finish(out, [ad = a.ptr(), od = out.ptr(), outer, last, offset, count]() {
    const auto& go = od->grad;
    if (go.empty() || !ad->requires_grad) return;
    ensure_grad(*ad);
    for (int64_t o = 0; o < outer; ++o)
      for (int j = 0; j < count; ++j)
        ad->grad[o * last + offset + j] += go[o * count + j];
  });
  return out;
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_last: needs at least one part");
  for (const Tensor& p : parts)
    require(p.defined() && !p.shape().empty(),
            "concat_last: every part must have rank >= 1");
  const Shape& s0 = parts[0].shape();
  int total_last = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    require(s.size() == s0.size(), "concat_last: rank mismatch");
    for (size_t d = 0; d + 1 < s.size(); ++d)
      require(s[d] == s0[d], "concat_last: leading dimensions differ");
    total_last += s.back();
    any_grad = any_grad || p.requires_grad();
  }
  Shape oshape = s0;
  oshape.back() = total_last;
  const int64_t outer = parts[0].size() / s0.back();
  std::vector<double> ov(static_cast<size_t>(outer) * total_last);
  int off = 0;
  for (const Tensor& p : parts) {
    const auto& pv = p.values();
    const int pl = p.shape().back();
    for (int64_t o = 0; o < outer; ++o)
      for (int j = 0; j < pl; ++j) ov[o * total_last + off + j] = pv[o * pl + j];
    off += pl;
  }
  Tensor out = make_op_output(std::move(oshape), std::move(ov),
                              Graph::active().recording() && any_grad);
  std::vector<std::shared_ptr<TensorData>> srcs;
  std::vector<int> lens, offs;
  srcs.reserve(parts.size());
  off = 0;
  for (const Tensor& p : parts) {
    srcs.push_back(p.ptr());
    lens.push_back(p.shape().back());
    offs.push_back(off);
    off += p.shape().back();
  }
  finish(out, [srcs = std::move(srcs), lens = std::move(lens),
               offs = std::move(offs), od = out.ptr(), outer, total_last]() {
    const auto& go = od->grad;
    if (go.empty()) return;
    for (size_t pi = 0; pi < srcs.size(); ++pi) {
      TensorData& ad = *srcs[pi];
      if (!ad.requires_grad) continue;
      ensure_grad(ad);
      const int pl = lens[pi];
      const int po = offs[pi];
      for (int64_t o = 0; o < outer; ++o)
        for (int j = 0; j < pl; ++j)
          ad.grad[o * pl + j] += go[o * total_last + po + j];
    }
  });
  return out;
}

Tensor select(const Tensor& a, int64_t flat_index) {
  require(a.defined(), "select: undefined operand");
  require(flat_index >= 0 && flat_index < a.size(), "select: index out of range");
  Tensor out = make_op_output(Shape{}, {a.values()[static_cast<size_t>(flat_index)]},
                              should_track(a));
  finish(out, [ad = a.ptr(), od = out.ptr(), flat_index]() {
    const auto& go = od->grad;
    if (go.empty() || !ad->requires_grad) return;
    ensure_grad(*ad);
    ad->grad[static_cast<size_t>(flat_index)] += go[0];
  });
  return out;
}

}  // namespace gridpose::ad
