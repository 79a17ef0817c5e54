#include "medttt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace medttt {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

namespace {

using ll = long long;

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x))
      throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

}  // namespace

namespace detail {

Tensor make_op(const char* op, Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backprop) {
  check_finite(op, value);
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool tracked = false;
  for (const auto& p : parents) tracked = tracked || p.tracked();
  if (tracked) {
    n->tracked = true;
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

void ensure_grad(detail::Node& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
}

// Parent i's grad buffer, sized on first touch. Untracked parents take no
// gradient; writes to them land in a discarded scratch buffer.
std::vector<double>& parent_grad(Node& n, std::size_t i) {
  Node& p = *n.parents[i];
  if (!p.tracked) {
    static thread_local std::vector<double> scratch;
    scratch.assign(p.value.size(), 0.0);
    return scratch;
  }
  ensure_grad(p);
  return p.grad;
}

}  // namespace detail

namespace {
using detail::make_op;
constexpr auto pgrad = detail::parent_grad;
using detail::ensure_grad;
}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
  if (shape_size(shape) != data.size())
    throw ShapeError("shape " + shape_str(shape) + " does not match data length " +
                     std::to_string(data.size()));
  check_finite("tensor construction", data);
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
  node_->tracked = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> d(shape_size(shape), 0.0);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  std::vector<double> d(shape_size(shape), v);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(Shape{1}, {v}, requires_grad);
}

double Tensor::at2(std::size_t i, std::size_t j) const {
  return node_->value[i * node_->shape[1] + j];
}

double Tensor::value() const {
  if (size() != 1) throw ContractError("value() requires a scalar tensor");
  return node_->value[0];
}

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty())
    throw ContractError("no gradient available; run backward() first");
  return node_->grad;
}

void Tensor::clear_grad() { node_->grad.clear(); }

void Tensor::apply_update(const std::vector<double>& delta, double scale) {
  if (!node_->requires_grad) throw ContractError("apply_update: not a leaf");
  if (delta.size() != node_->value.size())
    throw ShapeError("apply_update: delta length mismatch");
  for (std::size_t i = 0; i < delta.size(); ++i)
    node_->value[i] += scale * delta[i];
  check_finite("apply_update", node_->value);
}

void Tensor::set_values(const std::vector<double>& v) {
  if (v.size() != node_->value.size())
    throw ShapeError("set_values: length mismatch");
  check_finite("set_values", v);
  node_->value = v;
}

void backward(const Tensor& loss) {
  auto root = loss.node();
  if (!root) throw ContractError("backward on an undefined tensor");
  if (root->value.size() != 1)
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_str(root->shape));
  if (!root->tracked) throw ContractError("backward: loss is not tracked");
  if (root->backward_done)
    throw ContractError("backward already run on this tape; re-run the forward pass");
  root->backward_done = true;

  // Iterative DFS post-order gives a topological order.
  std::vector<detail::Node*> topo;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      detail::Node* p = n->parents[i++].get();
      if (p->tracked && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }

  // Interior grads are per-pass; leaf grads accumulate across passes.
  for (auto* n : topo)
    if (!n->requires_grad) n->grad.assign(n->value.size(), 0.0);
  for (auto* n : topo) ensure_grad(*n);
  root->grad[0] = 1.0;

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

// Binary elementwise with scalar broadcast (either side may be a 1-element
// tensor). fg/ga/gb give value and the two local derivatives.
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b,
                 double (*f)(double, double), double (*da)(double, double),
                 double (*db)(double, double)) {
  const auto& av = a.values();
  const auto& bv = b.values();
  bool sa = av.size() == 1, sb = bv.size() == 1;
  if (!sa && !sb && a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  std::size_t n = std::max(av.size(), bv.size());
  Shape shape = sa && !sb ? b.shape() : a.shape();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = f(av[sa ? 0 : i], bv[sb ? 0 : i]);
  return make_op(op, std::move(shape), std::move(out), {a, b},
                 [da, db, sa, sb, n](detail::Node& nd) {
                   auto& ag = pgrad(nd, 0);
                   auto& bg = pgrad(nd, 1);
                   const auto& av = nd.parents[0]->value;
                   const auto& bv = nd.parents[1]->value;
                   for (std::size_t i = 0; i < n; ++i) {
                     double x = av[sa ? 0 : i], y = bv[sb ? 0 : i], g = nd.grad[i];
                     ag[sa ? 0 : i] += g * da(x, y);
                     bg[sb ? 0 : i] += g * db(x, y);
                   }
                 });
}

Tensor unary_op(const char* op, const Tensor& x, double (*f)(double),
                double (*df)(double)) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x.at(i));
  return make_op(op, x.shape(), std::move(out), {x},
                 [df](detail::Node& nd) {
                   auto& xg = pgrad(nd, 0);
                   const auto& xv = nd.parents[0]->value;
                   for (std::size_t i = 0; i < xv.size(); ++i)
                     xg[i] += nd.grad[i] * df(xv[i]);
                 });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op("add", a, b, [](double x, double y) { return x + y; },
                   [](double, double) { return 1.0; },
                   [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op("sub", a, b, [](double x, double y) { return x - y; },
                   [](double, double) { return 1.0; },
                   [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op("mul", a, b, [](double x, double y) { return x * y; },
                   [](double, double y) { return y; },
                   [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double y : b.values())
    if (y == 0.0) throw DomainError("div: division by zero");
  return binary_op("div", a, b, [](double x, double y) { return x / y; },
                   [](double, double y) { return 1.0 / y; },
                   [](double x, double y) { return -x / (y * y); });
}

Tensor add(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }
Tensor mul(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }
Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor relu(const Tensor& x) {
  return unary_op("relu", x, [](double v) { return v > 0 ? v : 0.0; },
                  [](double v) { return v > 0 ? 1.0 : 0.0; });
}

namespace detail {

double gelu_val(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double a = 0.044715;
  return 0.5 * x * (1.0 + std::tanh(c * (x + a * x * x * x)));
}

double gelu_d1(double x) {
  constexpr double c = 0.7978845608028654;
  constexpr double a = 0.044715;
  double u = c * (x + a * x * x * x);
  double t = std::tanh(u);
  double du = c * (1.0 + 3.0 * a * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

double gelu_d2(double x) {
  constexpr double c = 0.7978845608028654;
  constexpr double a = 0.044715;
  double u = c * (x + a * x * x * x);
  double t = std::tanh(u);
  double s = 1.0 - t * t;
  double du = c * (1.0 + 3.0 * a * x * x);
  double ddu = 6.0 * c * a * x;
  return s * du + 0.5 * x * s * (ddu - 2.0 * t * du * du);
}

}  // namespace detail

Tensor gelu(const Tensor& x) {
  return unary_op("gelu", x, detail::gelu_val, detail::gelu_d1);
}

Tensor gelu_deriv(const Tensor& x) {
  return unary_op("gelu_deriv", x, detail::gelu_d1, detail::gelu_d2);
}

Tensor sigmoid(const Tensor& x) {
  return unary_op("sigmoid", x,
                  [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                  [](double v) {
                    double s = 1.0 / (1.0 + std::exp(-v));
                    return s * (1.0 - s);
                  });
}

Tensor exp_(const Tensor& x) {
  return unary_op("exp", x, [](double v) { return std::exp(v); },
                  [](double v) { return std::exp(v); });
}

Tensor log_(const Tensor& x) {
  for (double v : x.values())
    if (v <= 0.0) throw DomainError("log: argument must be positive, got " +
                                    std::to_string(v));
  return unary_op("log", x, [](double v) { return std::log(v); },
                  [](double v) { return 1.0 / v; });
}

Tensor sqrt_(const Tensor& x) {
  for (double v : x.values())
    if (v < 0.0) throw DomainError("sqrt: argument must be non-negative");
  return unary_op("sqrt", x, [](double v) { return std::sqrt(v); },
                  [](double v) { return 0.5 / std::sqrt(v); });
}

Tensor square(const Tensor& x) {
  return unary_op("square", x, [](double v) { return v * v; },
                  [](double v) { return 2.0 * v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = std::min(hi, std::max(lo, x.at(i)));
  return make_op("clamp", x.shape(), std::move(out), {x},
                 [lo, hi](detail::Node& nd) {
                   auto& xg = pgrad(nd, 0);
                   const auto& xv = nd.parents[0]->value;
                   for (std::size_t i = 0; i < xv.size(); ++i)
                     if (xv[i] > lo && xv[i] < hi) xg[i] += nd.grad[i];
                 });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2)
    throw ShapeError("matmul: left operand must be rank 2, got " +
                     shape_str(a.shape()));
  bool vec = b.rank() == 1;
  if (!vec && b.rank() != 2)
    throw ShapeError("matmul: right operand must be rank 1 or 2, got " +
                     shape_str(b.shape()));
  std::size_t m = a.shape()[0], k = a.shape()[1];
  std::size_t k2 = b.shape()[0], n = vec ? 1 : b.shape()[1];
  if (k != k2)
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  Shape shape = vec ? Shape{m} : Shape{m, n};
  return make_op("matmul", std::move(shape), std::move(out), {a, b},
                 [m, k, n](detail::Node& nd) {
                   auto& ag = pgrad(nd, 0);
                   auto& bg = pgrad(nd, 1);
                   const auto& av = nd.parents[0]->value;
                   const auto& bv = nd.parents[1]->value;
                   const auto& g = nd.grad;
                   // dA = g B^T, dB = A^T g
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t p = 0; p < k; ++p) {
                       double s = 0.0;
                       for (std::size_t j = 0; j < n; ++j)
                         s += g[i * n + j] * bv[p * n + j];
                       ag[i * k + p] += s;
                     }
                   for (std::size_t p = 0; p < k; ++p)
                     for (std::size_t j = 0; j < n; ++j) {
                       double s = 0.0;
                       for (std::size_t i = 0; i < m; ++i)
                         s += av[i * k + p] * g[i * n + j];
                       bg[p * n + j] += s;
                     }
                 });
}

Tensor outer(const Tensor& u, const Tensor& v) {
  if (u.rank() != 1 || v.rank() != 1)
    throw ShapeError("outer: both operands must be rank 1");
  std::size_t m = u.size(), n = v.size();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = u.at(i) * v.at(j);
  return make_op("outer", {m, n}, std::move(out), {u, v},
                 [m, n](detail::Node& nd) {
                   auto& ug = pgrad(nd, 0);
                   auto& vg = pgrad(nd, 1);
                   const auto& uv = nd.parents[0]->value;
                   const auto& vv = nd.parents[1]->value;
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < n; ++j) {
                       double g = nd.grad[i * n + j];
                       ug[i] += g * vv[j];
                       vg[j] += g * uv[i];
                     }
                 });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: rank 2 required");
  std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x.at(i * n + j);
  return make_op("transpose", {n, m}, std::move(out), {x},
                 [m, n](detail::Node& nd) {
                   auto& xg = pgrad(nd, 0);
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < n; ++j)
                       xg[i * n + j] += nd.grad[j * m + i];
                 });
}

Tensor dot(const Tensor& u, const Tensor& v) {
  if (u.rank() != 1 || v.rank() != 1 || u.size() != v.size())
    throw ShapeError("dot: operands must be equal-length vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u.at(i) * v.at(i);
  return make_op("dot", {1}, {s}, {u, v}, [](detail::Node& nd) {
    auto& ug = pgrad(nd, 0);
    auto& vg = pgrad(nd, 1);
    const auto& uv = nd.parents[0]->value;
    const auto& vv = nd.parents[1]->value;
    double g = nd.grad[0];
    for (std::size_t i = 0; i < uv.size(); ++i) {
      ug[i] += g * vv[i];
      vg[i] += g * uv[i];
    }
  });
}

// ---------------------------------------------------------------------------
// reductions / shape
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double s = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  return make_op("sum", {1}, {s}, {x}, [](detail::Node& nd) {
    auto& xg = pgrad(nd, 0);
    for (double& g : xg) g += nd.grad[0];
  });
}

Tensor mean(const Tensor& x) { return mul(sum(x), 1.0 / double(x.size())); }

namespace {

// Decompose shape around `axis` into outer/len/inner strides.
void axis_split(const Shape& s, std::size_t axis, std::size_t& outer,
                std::size_t& len, std::size_t& inner) {
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  len = s[axis];
  inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace

Tensor sum(const Tensor& x, std::size_t axis) {
  std::size_t outer, len, inner;
  axis_split(x.shape(), axis, outer, len, inner);
  Shape oshape = x.shape();
  oshape.erase(oshape.begin() + axis);
  if (oshape.empty()) oshape = {1};
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i)
        out[o * inner + i] += x.at((o * len + l) * inner + i);
  return make_op("sum", std::move(oshape), std::move(out), {x},
                 [outer, len, inner](detail::Node& nd) {
                   auto& xg = pgrad(nd, 0);
                   for (std::size_t o = 0; o < outer; ++o)
                     for (std::size_t l = 0; l < len; ++l)
                       for (std::size_t i = 0; i < inner; ++i)
                         xg[(o * len + l) * inner + i] += nd.grad[o * inner + i];
                 });
}

Tensor mean(const Tensor& x, std::size_t axis) {
  std::size_t outer, len, inner;
  axis_split(x.shape(), axis, outer, len, inner);
  return mul(sum(x, axis), 1.0 / double(len));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " +
                     shape_str(shape) + " changes element count");
  return make_op("reshape", std::move(shape), x.values(), {x},
                 [](detail::Node& nd) {
                   auto& xg = pgrad(nd, 0);
                   for (std::size_t i = 0; i < xg.size(); ++i)
                     xg[i] += nd.grad[i];
                 });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& s0 = parts[0].shape();
  std::size_t outer, len0, inner;
  axis_split(s0, axis, outer, len0, inner);
  std::size_t total_len = 0;
  for (const auto& p : parts) {
    if (p.rank() != s0.size())
      throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s0.size(); ++i)
      if (i != axis && p.shape()[i] != s0[i])
        throw ShapeError("concat: extent mismatch at axis " + std::to_string(i));
    total_len += p.shape()[axis];
  }
  Shape oshape = s0;
  oshape[axis] = total_len;
  std::vector<double> out(outer * total_len * inner);
  std::vector<std::size_t> lens;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::size_t len = p.shape()[axis];
    lens.push_back(len);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i)
          out[(o * total_len + off + l) * inner + i] =
              p.at((o * len + l) * inner + i);
    off += len;
  }
  return make_op("concat", std::move(oshape), std::move(out), parts,
                 [outer, inner, total_len, lens](detail::Node& nd) {
                   std::size_t off = 0;
                   for (std::size_t k = 0; k < lens.size(); ++k) {
                     auto& g = pgrad(nd, k);
                     std::size_t len = lens[k];
                     for (std::size_t o = 0; o < outer; ++o)
                       for (std::size_t l = 0; l < len; ++l)
                         for (std::size_t i = 0; i < inner; ++i)
                           g[(o * len + l) * inner + i] +=
                               nd.grad[(o * total_len + off + l) * inner + i];
                     off += len;
                   }
                 });
}

Tensor slice0(const Tensor& x, std::size_t begin, std::size_t count) {
  const Shape& s = x.shape();
  if (begin + count > s[0]) throw ShapeError("slice0: range out of bounds");
  std::size_t inner = x.size() / s[0];
  Shape oshape = s;
  oshape[0] = count;
  std::vector<double> out(count * inner);
  std::copy_n(x.values().begin() + begin * inner, count * inner, out.begin());
  return make_op("slice0", std::move(oshape), std::move(out), {x},
                 [begin, count, inner](detail::Node& nd) {
                   auto& xg = pgrad(nd, 0);
                   for (std::size_t i = 0; i < count * inner; ++i)
                     xg[begin * inner + i] += nd.grad[i];
                 });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  std::size_t outer, len, inner;
  axis_split(x.shape(), axis, outer, len, inner);
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      double mx = -1e300;
      for (std::size_t l = 0; l < len; ++l)
        mx = std::max(mx, x.at((o * len + l) * inner + i));
      double z = 0.0;
      for (std::size_t l = 0; l < len; ++l)
        z += std::exp(x.at((o * len + l) * inner + i) - mx);
      for (std::size_t l = 0; l < len; ++l)
        out[(o * len + l) * inner + i] =
            std::exp(x.at((o * len + l) * inner + i) - mx) / z;
    }
  return make_op("softmax", x.shape(), std::move(out), {x},
                 [outer, len, inner](detail::Node& nd) {
                   auto& xg = pgrad(nd, 0);
                   const auto& y = nd.value;
                   for (std::size_t o = 0; o < outer; ++o)
                     for (std::size_t i = 0; i < inner; ++i) {
                       double gy = 0.0;
                       for (std::size_t l = 0; l < len; ++l) {
                         std::size_t ix = (o * len + l) * inner + i;
                         gy += nd.grad[ix] * y[ix];
                       }
                       for (std::size_t l = 0; l < len; ++l) {
                         std::size_t ix = (o * len + l) * inner + i;
                         xg[ix] += y[ix] * (nd.grad[ix] - gy);
                       }
                     }
                 });
}

// ---------------------------------------------------------------------------
// spatial
// ---------------------------------------------------------------------------

namespace {

// Interpret rank-2 as 1xHxW, rank-3 as CxHxW.
void chw(const Tensor& x, std::size_t& c, std::size_t& h, std::size_t& w) {
  if (x.rank() == 2) {
    c = 1;
    h = x.shape()[0];
    w = x.shape()[1];
  } else if (x.rank() == 3) {
    c = x.shape()[0];
    h = x.shape()[1];
    w = x.shape()[2];
  } else {
    throw ShapeError("expected rank 2 or 3 spatial tensor, got " +
                     shape_str(x.shape()));
  }
}

}  // namespace

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  std::size_t c, h, w;
  chw(x, c, h, w);
  std::size_t H = h * factor, W = w * factor;
  std::vector<double> out(c * H * W);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t z = 0; z < W; ++z)
        out[(ch * H + y) * W + z] =
            x.at((ch * h + y / factor) * w + z / factor);
  Shape oshape = x.rank() == 2 ? Shape{H, W} : Shape{c, H, W};
  return make_op("upsample_nearest", std::move(oshape), std::move(out), {x},
                 [c, h, w, factor](detail::Node& nd) {
                   auto& xg = pgrad(nd, 0);
                   std::size_t H = h * factor, W = w * factor;
                   for (std::size_t ch = 0; ch < c; ++ch)
                     for (std::size_t y = 0; y < H; ++y)
                       for (std::size_t z = 0; z < W; ++z)
                         xg[(ch * h + y / factor) * w + z / factor] +=
                             nd.grad[(ch * H + y) * W + z];
                 });
}

Tensor downsample_avg(const Tensor& x, std::size_t factor) {
  std::size_t c, h, w;
  chw(x, c, h, w);
  if (h % factor != 0 || w % factor != 0)
    throw ShapeError("downsample_avg: extents " + shape_str(x.shape()) +
                     " not divisible by factor " + std::to_string(factor));
  std::size_t H = h / factor, W = w / factor;
  double inv = 1.0 / double(factor * factor);
  std::vector<double> out(c * H * W, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t z = 0; z < w; ++z)
        out[(ch * H + y / factor) * W + z / factor] +=
            x.at((ch * h + y) * w + z) * inv;
  Shape oshape = x.rank() == 2 ? Shape{H, W} : Shape{c, H, W};
  return make_op("downsample_avg", std::move(oshape), std::move(out), {x},
                 [c, h, w, factor, inv](detail::Node& nd) {
                   auto& xg = pgrad(nd, 0);
                   std::size_t H = h / factor, W = w / factor;
                   for (std::size_t ch = 0; ch < c; ++ch)
                     for (std::size_t y = 0; y < h; ++y)
                       for (std::size_t z = 0; z < w; ++z)
                         xg[(ch * h + y) * w + z] +=
                             nd.grad[(ch * H + y / factor) * W + z / factor] *
                             inv;
                 });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  if (input.rank() != 3) throw ShapeError("conv2d: input must be CxHxW");
  if (kernel.rank() != 4)
    throw ShapeError("conv2d: kernel must be C_out x C_in x k x k");
  std::size_t ci = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  std::size_t co = kernel.shape()[0], cik = kernel.shape()[1];
  std::size_t kh = kernel.shape()[2], kw = kernel.shape()[3];
  if (cik != ci)
    throw ShapeError("conv2d: kernel input channels " + std::to_string(cik) +
                     " vs input channels " + std::to_string(ci));
  if (kh != kw || kh % 2 == 0)
    throw ShapeError("conv2d: kernel must be square with odd extent");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  long long oh = (ll(h) + 2 * ll(padding) - ll(kh)) /
                     ll(stride) + 1;
  long long ow = (ll(w) + 2 * ll(padding) - ll(kw)) /
                     ll(stride) + 1;
  if (oh <= 0 || ow <= 0)
    throw ShapeError("conv2d: non-positive output extent for input " +
                     shape_str(input.shape()));
  std::size_t H = std::size_t(oh), W = std::size_t(ow);
  bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.size() != co))
    throw ShapeError("conv2d: bias must be a vector of length C_out");

  std::vector<double> out(co * H * W, 0.0);
  const auto& iv = input.values();
  const auto& kv = kernel.values();
  for (std::size_t o = 0; o < co; ++o) {
    double b = has_bias ? bias.at(o) : 0.0;
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx) {
          double kval = kv[((o * ci + c) * kh + ky) * kw + kx];
          if (kval == 0.0) continue;
          for (std::size_t y = 0; y < H; ++y) {
            long long sy = ll(y * stride + ky) - ll(padding);
            if (sy < 0 || sy >= ll(h)) continue;
            const double* irow = &iv[(c * h + std::size_t(sy)) * w];
            double* orow = &out[(o * H + y) * W];
            for (std::size_t x = 0; x < W; ++x) {
              long long sx = ll(x * stride + kx) - ll(padding);
              if (sx < 0 || sx >= ll(w)) continue;
              orow[x] += kval * irow[sx];
            }
          }
        }
    if (b != 0.0)
      for (std::size_t i = 0; i < H * W; ++i) out[o * H * W + i] += b;
  }

  std::vector<Tensor> parents = {input, kernel};
  if (has_bias) parents.push_back(bias);
  return make_op(
      "conv2d", {co, H, W}, std::move(out), std::move(parents),
      [ci, h, w, co, kh, kw, H, W, stride, padding,
       has_bias](detail::Node& nd) {
        auto& ig = pgrad(nd, 0);
        auto& kg = pgrad(nd, 1);
        const auto& iv = nd.parents[0]->value;
        const auto& kv = nd.parents[1]->value;
        const auto& g = nd.grad;
        for (std::size_t o = 0; o < co; ++o)
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                double kval = kv[((o * ci + c) * kh + ky) * kw + kx];
                double ksum = 0.0;
                for (std::size_t y = 0; y < H; ++y) {
                  long long sy = ll(y * stride + ky) - ll(padding);
                  if (sy < 0 || sy >= ll(h)) continue;
                  const double* irow = &iv[(c * h + std::size_t(sy)) * w];
                  double* igrow = &ig[(c * h + std::size_t(sy)) * w];
                  const double* grow = &g[(o * H + y) * W];
                  for (std::size_t x = 0; x < W; ++x) {
                    long long sx = ll(x * stride + kx) - ll(padding);
                    if (sx < 0 || sx >= ll(w)) continue;
                    ksum += grow[x] * irow[sx];
                    igrow[sx] += grow[x] * kval;
                  }
                }
                kg[((o * ci + c) * kh + ky) * kw + kx] += ksum;
              }
        if (has_bias) {
          auto& bg = pgrad(nd, 2);
          for (std::size_t o = 0; o < co; ++o) {
            double s = 0.0;
            for (std::size_t i = 0; i < H * W; ++i) s += g[o * H * W + i];
            bg[o] += s;
          }
        }
      });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
              std::size_t padding) {
  return conv2d(input, kernel, Tensor(), stride, padding);
}

Tensor layer_norm(const Tensor& x, double eps) {
  Tensor m = mean(x);
  Tensor centered = sub(x, m);
  Tensor var = mean(square(centered));
  Tensor denom = sqrt_(add(var, eps));
  return div(centered, denom);
}

}  // namespace medttt
