// Random composite expressions over the whole tensor op set, replayable so
// finite differences can re-evaluate the identical expression.
#ifndef REMIX_TESTS_RANDOM_GRAPH_HPP_
#define REMIX_TESTS_RANDOM_GRAPH_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "remix/rng.hpp"
#include "remix/tensor.hpp"

namespace remix::testing {

enum Op {
  kAddLeaf, kSubLeaf, kMulLeaf, kDivLeaf, kMatmul, kNeg, kScale, kAddScalar, kExp, kLog, kSquare,
  kRelu, kLeakyRelu, kSigmoid, kTanh, kSoftplus, kClamp, kSumAxis, kMeanAxis, kLogsumexp,
  kConcat, kSlice, kReshape, kTranspose, kAddRow, kOpCount
};

inline const char* op_name(int op) {
  static const char* names[] = {"add", "sub", "mul", "div", "matmul", "neg", "scale", "add_scalar",
                                "exp", "log", "square", "relu", "leaky_relu", "sigmoid", "tanh",
                                "softplus", "clamp", "sum", "mean", "logsumexp", "concat", "slice",
                                "reshape", "transpose", "add_row"};
  return names[op];
}

struct Step {
  int op;
  double p = 0.0;
  std::size_t leaf = 0;
  std::size_t axis = 0;
  std::size_t begin = 0, end = 0;
};

class RandomGraph {
 public:
  std::vector<Tensor> leaves;
  std::vector<Step> program;
  int reduction = 0;  // 0 sum_all, 1 mean_all, 2 logsumexp of row sums

  /// Builds a program of `length` ops starting from an r x c leaf.
  static RandomGraph make(Rng& rng, std::size_t length) {
    RandomGraph g;
    auto dim = [&] { return 2 + static_cast<std::size_t>(rng.uniform() * 3.0); };
    auto leaf = [&](Shape s) {
      Tensor t = rng.randn(std::move(s));
      t.set_requires_grad(true);
      g.leaves.push_back(t);
      return g.leaves.size() - 1;
    };
    leaf({dim(), dim()});
    Tensor cur = g.leaves[0];
    for (std::size_t i = 0; i < length; ++i) {
      Step s{static_cast<int>(rng.uniform() * static_cast<double>(kOpCount))};
      const std::size_t r = cur.shape()[0], c = cur.shape()[1];
      switch (s.op) {
        case kAddLeaf: case kSubLeaf: case kMulLeaf: case kDivLeaf: case kConcat:
          s.axis = rng.uniform() < 0.5 ? 0 : 1;
          s.leaf = s.op == kConcat ? leaf(s.axis == 0 ? Shape{dim(), c} : Shape{r, dim()}) : leaf({r, c});
          break;
        case kAddRow: s.leaf = leaf({c}); break;
        case kMatmul: s.leaf = leaf({c, dim()}); break;
        case kScale: s.p = rng.uniform(-2.0, 2.0); break;
        case kAddScalar: s.p = rng.uniform(-1.0, 1.0); break;
        case kLeakyRelu: s.p = rng.uniform(0.01, 0.3); break;
        case kSumAxis: case kMeanAxis: case kLogsumexp: s.axis = rng.uniform() < 0.5 ? 0 : 1; break;
        case kSlice: {
          s.axis = rng.uniform() < 0.5 ? 0 : 1;
          const std::size_t n = cur.shape()[s.axis];
          if (n < 2) { s.op = kNeg; break; }
          s.begin = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n - 1));
          s.end = s.begin + 1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(n - s.begin - 1));
          break;
        }
        default: break;
      }
      // Finite differences straddling a kink are meaningless; swap in a smooth op.
      if (s.op == kRelu || s.op == kLeakyRelu || s.op == kClamp) {
        double gap = 1e300;
        for (double v : cur.data())
          gap = std::min(gap, s.op == kClamp ? std::min(std::abs(v - 0.8), std::abs(v + 0.8)) : std::abs(v));
        if (gap < 1e-2) s.op = kSoftplus;
      }
      g.program.push_back(s);
      cur = g.apply(cur, s, g.leaves);
      // Keep magnitudes moderate so finite differences stay well conditioned.
      double mx = 0.0;
      for (double v : cur.data()) mx = std::max(mx, std::abs(v));
      if (mx > 4.0) {
        g.program.push_back(Step{kTanh});
        cur = tanh(cur);
      }
    }
    g.reduction = static_cast<int>(rng.uniform() * 3.0);
    return g;
  }

  Tensor eval(const std::vector<Tensor>& ls) const {
    Tensor cur = ls[0];
    for (const Step& s : program) cur = apply(cur, s, ls);
    if (reduction == 0) return sum_all(cur);
    if (reduction == 1) return mean_all(cur);
    return reshape(logsumexp(sum(cur, 1), 0), {});
  }

  std::string describe() const {
    std::string d;
    for (const Step& s : program) d += std::string(d.empty() ? "" : " > ") + op_name(s.op);
    return d;
  }

 private:
  static Tensor rank2(const Tensor& t, std::size_t rows) { return reshape(t, {rows, t.numel() / rows}); }

  static Tensor apply(const Tensor& cur, const Step& s, const std::vector<Tensor>& ls) {
    switch (s.op) {
      case kAddLeaf: return cur + ls[s.leaf];
      case kSubLeaf: return cur - ls[s.leaf];
      case kMulLeaf: return cur * ls[s.leaf];
      case kDivLeaf: return cur / add_scalar(softplus(ls[s.leaf]), 0.5);
      case kMatmul: return matmul(cur, ls[s.leaf]);
      case kNeg: return -cur;
      case kScale: return scale(cur, s.p);
      case kAddScalar: return add_scalar(cur, s.p);
      case kExp: return exp(tanh(cur));
      case kLog: return log(add_scalar(softplus(cur), 0.1));
      case kSquare: return square(cur);
      case kRelu: return relu(cur);
      case kLeakyRelu: return leaky_relu(cur, s.p);
      case kSigmoid: return sigmoid(cur);
      case kTanh: return tanh(cur);
      case kSoftplus: return softplus(cur);
      case kClamp: return clamp(cur, -0.8, 0.8);
      case kSumAxis: return s.axis == 0 ? rank2(sum(cur, 0), 1) : rank2(sum(cur, 1), cur.shape()[0]);
      case kMeanAxis: return s.axis == 0 ? rank2(mean(cur, 0), 1) : rank2(mean(cur, 1), cur.shape()[0]);
      case kLogsumexp:
        return s.axis == 0 ? rank2(logsumexp(cur, 0), 1) : rank2(logsumexp(cur, 1), cur.shape()[0]);
      case kConcat: return concat({cur, ls[s.leaf]}, s.axis);
      case kSlice: return slice(cur, s.axis, s.begin, s.end);
      case kReshape: return reshape(cur, {cur.shape()[1], cur.shape()[0]});
      case kTranspose: return transpose(cur);
      case kAddRow: return cur + ls[s.leaf];
      default: return cur;
    }
  }
};

struct GradCheck {
  double worst_ratio = 0.0;  // max |analytic - numeric| / (atol + rtol |numeric|)
  double worst_abs = 0.0;
};

/// Compares backward() against Richardson-extrapolated central differences.
inline GradCheck grad_check(const RandomGraph& g, double rtol, double atol, double h = 1e-4) {
  for (const Tensor& l : g.leaves) const_cast<Tensor&>(l).zero_grad();
  backward(g.eval(g.leaves));
  GradCheck out;
  NoGradGuard no_grad;
  for (const Tensor& leaf_c : g.leaves) {
    Tensor leaf = leaf_c;
    const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    for (std::size_t i = 0; i < leaf.numel(); ++i) {
      const double x0 = leaf[i];
      auto f = [&](double x) {
        leaf.mutable_data()[i] = x;
        const double v = g.eval(g.leaves).item();
        leaf.mutable_data()[i] = x0;
        return v;
      };
      const double d1 = (f(x0 + h) - f(x0 - h)) / (2 * h);
      const double d2 = (f(x0 + h / 2) - f(x0 - h / 2)) / h;
      const double numeric = (4 * d2 - d1) / 3;
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double err = std::abs(a - numeric);
      out.worst_abs = std::max(out.worst_abs, err);
      out.worst_ratio = std::max(out.worst_ratio, err / (atol + rtol * std::abs(numeric)));
    }
  }
  return out;
}

}  // namespace remix::testing

#endif  // REMIX_TESTS_RANDOM_GRAPH_HPP_
