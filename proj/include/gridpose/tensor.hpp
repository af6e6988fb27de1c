#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "gridpose/common.hpp"

namespace gridpose::ad {

// Dense row-major double tensor with reverse-mode differentiation.
//
// Ops record their backward step onto a thread-local tape (Graph) whenever
// recording is enabled and any input is tracked. backward() replays the tape
// in reverse execution order, which is a valid topological order, so every
// node runs exactly once and fan-out gradients accumulate additively.

using Shape = std::vector<int>;

int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily on first accumulation
  bool requires_grad = false;
  int node = -1;  // tape index of the producing op, -1 for leaves
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor constant(Shape shape, double fill);
  static Tensor scalar(double v);
  // A tracked leaf: gradients accumulate here during backward().
  static Tensor variable(Shape shape, std::vector<double> values);
  static Tensor variable(Shape shape, double fill);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const;
  int64_t size() const;
  bool requires_grad() const;

  const std::vector<double>& values() const;
  double value() const;  // size-1 tensors only
  double value_at(int64_t i) const;

  // Zeros if backward never reached this tensor.
  const std::vector<double>& grad() const;
  double grad_at(int64_t i) const;
  void zero_grad();

  // Leaf mutation hook for the optimizer and for finite-difference
  // perturbation. Mutating a tensor that already feeds a recorded graph
  // invalidates that graph; callers rebuild instead.
  std::vector<double>& mutable_values();

  const std::shared_ptr<TensorData>& ptr() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;

  friend Tensor make_op_output(Shape shape, std::vector<double> values,
                               bool track);
};

class Graph {
 public:
  static Graph& active();

  int record(std::function<void()> backward_step);
  void clear();
  size_t size() const { return steps_.size(); }
  bool recording() const { return suspend_ == 0; }

  void run_backward_from(int node);

 private:
  std::vector<std::function<void()>> steps_;
  int suspend_ = 0;
  friend struct NoGradGuard;
};

// RAII recording suspension for evaluation-only forwards.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// root must be a size-1 tensor. Seeds d(root)/d(root) = 1 and accumulates
// into every tracked leaf reachable from it.
void backward(const Tensor& root);

// Elementwise binaries accept equal shapes or a size-1 tensor on either
// side (scalar broadcast). Shape mismatch raises ContractViolation.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);  // domain x >= 0
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // domain x > 0
Tensor sigmoid(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Ties route the gradient to the lowest flat index.
Tensor max_reduce(const Tensor& a);
// Ties route the gradient to the first operand.
Tensor max_elementwise(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]

// x: [H,W,Cin], w: [kh,kw,Cin,Cout] with odd kh,kw, optional b: [Cout].
// Stride 1, zero padding to same spatial size.
Tensor conv2d_small(const Tensor& x, const Tensor& w, const Tensor& b);

// Structural plumbing: differentiable data movement.
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_last(const Tensor& a, int offset, int count);
Tensor select(const Tensor& a, int64_t flat_index);  // size-1 result
// Concatenates along the last axis; leading dimensions must agree.
Tensor concat_last(const std::vector<Tensor>& parts);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }
inline Tensor operator+(double a, const Tensor& b) { return add(Tensor::scalar(a), b); }
inline Tensor operator-(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
inline Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
inline Tensor operator/(double a, const Tensor& b) { return div(Tensor::scalar(a), b); }

}  // namespace gridpose::ad
