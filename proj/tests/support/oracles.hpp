// Independent reference computations used by unit and acceptance tests.
#ifndef REMIX_TESTS_ORACLES_HPP_
#define REMIX_TESTS_ORACLES_HPP_

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace remix::testing {

inline double normal_pdf(double x, double mu, double var) {
  return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

/// KL(N(m, v) || sum_k w_k N(mk, vk)) in one dimension by the trapezoid rule
/// on [lo, hi] with n intervals.
inline double kl_gauss_vs_mixture_1d(double m, double v, const std::vector<double>& w,
                                     const std::vector<double>& mk, const std::vector<double>& vk,
                                     double lo, double hi, std::size_t n) {
  const double h = (hi - lo) / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double x = lo + h * static_cast<double>(i);
    const double q = normal_pdf(x, m, v);
    if (q <= 0.0) continue;
    double p = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) p += w[k] * normal_pdf(x, mk[k], vk[k]);
    const double f = q * (std::log(q) - std::log(p));
    acc += (i == 0 || i == n) ? 0.5 * f : f;
  }
  return acc * h;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  MeanSe r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return r;
}

}  // namespace remix::testing

#endif  // REMIX_TESTS_ORACLES_HPP_
