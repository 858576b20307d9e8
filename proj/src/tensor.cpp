#include "remix/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "remix/kernels.hpp"

namespace remix {

using detail::Node;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : node_(std::make_shared<Node>()) { node_->shape = {}; node_->data = {0.0}; }

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (shape_numel(shape) != values.size())
    throw ShapeError("tensor of shape " + shape_str(shape) + " given " +
                     std::to_string(values.size()) + " values");
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape()));
  return shape()[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw ShapeError("at(row, col) on tensor of shape " + shape_str(shape()));
  return node_->data[row * shape()[1] + col];
}

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->data, false); }

Tensor Tensor::clone() const { return Tensor(shape(), node_->data, requires_grad()); }

bool Tensor::all_finite() const {
  return std::all_of(node_->data.begin(), node_->data.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor Tensor::from_node(std::shared_ptr<Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

// ---------------------------------------------------------------------------
// Gradient mode

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_mode_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------
// Tape plumbing

namespace {

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (auto& t : inputs) node->parents.push_back(t.node_ptr());
      node->backward = std::move(backward_fn);
    }
  }
  return Tensor::from_node(std::move(node));
}

Tensor make_unary(const Tensor& a, std::vector<double> out,
                  std::function<double(double x, double y)> dydx) {
  return make_result(a.shape(), std::move(out), {a}, [dydx = std::move(dydx)](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (std::size_t i = 0; i < self.data.size(); ++i)
      in.grad[i] += self.grad[i] * dydx(in.data[i], self.data[i]);
  });
}

template <class F>
std::vector<double> map(const Tensor& a, F f) {
  std::vector<double> out(a.numel());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return out;
}

enum class Bcast { kSame, kRhsRows, kLhsRows };

bool drops_leading(const Shape& big, const Shape& small) {
  return big.size() == small.size() + 1 && std::equal(small.begin(), small.end(), big.begin() + 1);
}

Bcast resolve(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Bcast::kSame;
  if (drops_leading(a.shape(), b.shape())) return Bcast::kRhsRows;
  if (drops_leading(b.shape(), a.shape())) return Bcast::kLhsRows;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

// Broadcast-aware binary op. f computes the value; da/db give the local
// partials given (x, y).
template <class F, class DA, class DB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  const Bcast mode = resolve(name, a, b);
  const Shape out_shape = mode == Bcast::kLhsRows ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  const std::size_t na = a.numel(), nb = b.numel();
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(ad[i % na], bd[i % nb]);
  return make_result(out_shape, std::move(out), {a, b}, [da, db, na, nb](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const std::size_t len = self.data.size();
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < len; ++i)
        pa.grad[i % na] += self.grad[i] * da(pa.data[i % na], pb.data[i % nb]);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < len; ++i)
        pb.grad[i % nb] += self.grad[i] * db(pa.data[i % na], pb.data[i % nb]);
    }
  });
}

struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape r = s;
  r.erase(r.begin() + static_cast<std::ptrdiff_t>(axis));
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Backward

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&loss.node(), 0}};
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node& root = loss.node();
  root.ensure_grad();
  root.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Interior grads are no longer needed; leaves keep theirs.
  for (Node* n : order)
    if (n->backward) n->grad.clear();
}

// ---------------------------------------------------------------------------
// Binary elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  std::vector<double> out(n * m);
  kernels::gemm_nn(a.data(), b.data(), out, n, k, m);
  return make_result({n, m}, std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      kernels::gemm_nt_acc(self.grad, pb.data, pa.grad, n, k, m);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      kernels::gemm_tn_acc(pa.data, self.grad, pb.grad, n, k, m);
    }
  });
}

// ---------------------------------------------------------------------------
// Unary

Tensor neg(const Tensor& a) {
  return make_unary(a, map(a, [](double x) { return -x; }), [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double factor) {
  return make_unary(a, map(a, [factor](double x) { return x * factor; }),
                    [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return make_unary(a, map(a, [value](double x) { return x + value; }),
                    [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
  return make_unary(a, map(a, [](double x) { return std::exp(x); }),
                    [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return make_unary(a, map(a, [](double x) { return std::log(x); }),
                    [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return make_unary(a, map(a, [](double x) { return x * x; }),
                    [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return make_unary(a, map(a, [](double x) { return x > 0.0 ? x : 0.0; }),
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return make_unary(a, map(a, [slope](double x) { return x > 0.0 ? x : slope * x; }),
                    [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

namespace {
double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& a) {
  return make_unary(a, map(a, stable_sigmoid), [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return make_unary(a, map(a, [](double x) { return std::tanh(x); }),
                    [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& a) {
  return make_unary(
      a, map(a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }),
      [](double x, double) { return stable_sigmoid(x); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw ShapeError("clamp: lo > hi");
  return make_unary(a, map(a, [lo, hi](double x) { return std::clamp(x, lo, hi); }),
                    [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis);
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto in = a.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += in[(o * s.len + l) * s.inner + i];
  return make_result(drop_axis(a.shape(), axis), std::move(out), {a}, [s](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.len; ++l)
        for (std::size_t i = 0; i < s.inner; ++i)
          p.grad[(o * s.len + l) * s.inner + i] += self.grad[o * s.inner + i];
  });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  const std::size_t len = a.dim(axis);
  if (len == 0) throw ShapeError("mean over empty axis of shape " + shape_str(a.shape()));
  return scale(sum(a, axis), 1.0 / static_cast<double>(len));
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result({}, {s}, {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (double& g : p.grad) g += self.grad[0];
  });
}

Tensor mean_all(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor logsumexp(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis);
  if (s.len == 0) throw ShapeError("logsumexp over empty axis of shape " + shape_str(a.shape()));
  std::vector<double> out(s.outer * s.inner);
  auto in = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, in[(o * s.len + l) * s.inner + i]);
      if (!std::isfinite(mx)) {
        out[o * s.inner + i] = mx;
        continue;
      }
      double acc = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) acc += std::exp(in[(o * s.len + l) * s.inner + i] - mx);
      out[o * s.inner + i] = mx + std::log(acc);
    }
  }
  return make_result(drop_axis(a.shape(), axis), std::move(out), {a}, [s](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const double lse = self.data[o * s.inner + i];
        const double g = self.grad[o * s.inner + i];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t idx = (o * s.len + l) * s.inner + i;
          p.grad[idx] += g * std::exp(p.data[idx] - lse);
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Structural

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw ShapeError("concat axis out of range for " + shape_str(ref));
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == ref[d];
    if (!ok) throw ShapeError("concat: incompatible shapes " + shape_str(ref) + " and " + shape_str(s));
    lens.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  const AxisSplit os = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto in = parts[k].data();
    const std::size_t chunk = lens[k] * os.inner;
    for (std::size_t o = 0; o < os.outer; ++o)
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>((o * os.len + offset) * os.inner));
    offset += lens[k];
  }
  return make_result(out_shape, std::move(out), parts, [os, lens](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      const std::size_t chunk = lens[k] * os.inner;
      if (p.requires_grad) {
        p.ensure_grad();
        for (std::size_t o = 0; o < os.outer; ++o)
          for (std::size_t c = 0; c < chunk; ++c)
            p.grad[o * chunk + c] += self.grad[(o * os.len + off) * os.inner + c];
      }
      off += lens[k];
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_axis(a.shape(), axis);
  if (begin > end || end > s.len)
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for axis " + std::to_string(axis) + " of " +
                     shape_str(a.shape()));
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * s.inner;
  std::vector<double> out(shape_numel(out_shape));
  auto in = a.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((o * s.len + begin) * s.inner), chunk,
                out.begin() + static_cast<std::ptrdiff_t>(o * chunk));
  return make_result(out_shape, std::move(out), {a}, [s, begin, chunk](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t c = 0; c < chunk; ++c)
        p.grad[(o * s.len + begin) * s.inner + c] += self.grad[o * chunk + c];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose needs rank 2, got " + shape_str(a.shape()));
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<double> out(r * c);
  auto in = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return make_result({c, r}, std::move(out), {a}, [r, c](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += self.grad[j * r + i];
  });
}

}  // namespace remix
