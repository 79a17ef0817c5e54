#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "medttt/errors.hpp"

namespace medttt {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_size(const Shape& s);

namespace detail {

// One tape node. A forward pass builds a fresh graph of these (define-by-run);
// backward() walks it once in reverse topological order.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily during backward; leaves accumulate
  bool requires_grad = false;
  bool tracked = false;
  bool backward_done = false;  // set on the root a backward() was run from
  std::vector<std::shared_ptr<Node>> parents;
  // Accumulates this node's grad into its parents' grads.
  std::function<void(Node&)> backprop;
};

}  // namespace detail

// Dense N-dimensional value, 64-bit floats, row-major. Value-semantics handle
// to a shared tape node. Immutable after construction apart from the gradient
// buffer written by backward().
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  const std::vector<double>& values() const { return node_->value; }
  double at(std::size_t i) const { return node_->value[i]; }
  double at2(std::size_t i, std::size_t j) const;
  double value() const;  // scalar only

  bool tracked() const { return node_->tracked; }
  bool is_leaf() const { return node_->requires_grad; }
  // Gradient accumulated by backward(); throws if none has been computed.
  const std::vector<double>& grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void clear_grad();
  // In-place value update for optimizers; only valid on leaves.
  void apply_update(const std::vector<double>& delta, double scale);
  void set_values(const std::vector<double>& v);

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Reverse-mode sweep from a scalar loss. Gradients land on every tracked leaf
// reachable from `loss` and accumulate across calls until clear_grad().
// A second backward() from the same root without a re-forward is rejected.
void backward(const Tensor& loss);

// --- elementwise ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor mul(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);        // tanh approximation, constant 0.044715
Tensor gelu_deriv(const Tensor& x);  // d/dx gelu, itself differentiable
Tensor sigmoid(const Tensor& x);
Tensor exp_(const Tensor& x);
Tensor log_(const Tensor& x);
Tensor sqrt_(const Tensor& x);
Tensor square(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

// --- linear algebra ---
Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k)x(k,n) or (m,k)x(k)
Tensor outer(const Tensor& u, const Tensor& v);   // (m)x(n) -> (m,n)
Tensor dot(const Tensor& u, const Tensor& v);     // (n)x(n) -> scalar

// --- reductions / shape ---
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice0(const Tensor& x, std::size_t begin, std::size_t count);
Tensor softmax(const Tensor& x, std::size_t axis);

// --- spatial (rank 2 treated as 1xHxW, rank 3 as CxHxW) ---
Tensor upsample_nearest(const Tensor& x, std::size_t factor);
Tensor downsample_avg(const Tensor& x, std::size_t factor);

// Direct cross-correlation. input CxHxW, kernel C_out x C_in x k x k, k odd,
// optional bias of length C_out; padding = k/2 gives "same" extents.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t stride, std::size_t padding);
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
              std::size_t padding);

// Layer norm over the whole tensor (used per token vector).
Tensor layer_norm(const Tensor& x, double eps = 1e-6);

Tensor transpose(const Tensor& x);  // rank 2

namespace detail {
double gelu_val(double x);
double gelu_d1(double x);
double gelu_d2(double x);

// Build a graph node for a custom primitive. The node is tracked iff any
// parent is; `backprop` must accumulate into parent grads via parent_grad().
Tensor make_op(const char* op, Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(Node&)> backprop);
std::vector<double>& parent_grad(Node& n, std::size_t i);
}  // namespace detail

}  // namespace medttt
