#include <vector>

#include "doctest.h"
#include "remix/kernels.hpp"
#include "remix/rng.hpp"

using namespace remix;

namespace {

std::vector<double> randv(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  // Some exact zeros exercise the skip in the transposed kernel.
  for (std::size_t i = 0; i < n; i += 7) v[i] = 0.0;
  return v;
}

// Textbook triple loop, the independent reference.
std::vector<double> naive(const std::vector<double>& a, const std::vector<double>& b, std::size_t n,
                          std::size_t k, std::size_t m) {
  std::vector<double> c(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * m + j] += a[i * k + p] * b[p * m + j];
  return c;
}

}  // namespace

TEST_CASE("serial gemm matches the naive product") {
  const std::size_t n = 5, k = 7, m = 3;
  const auto a = randv(n * k, 1), b = randv(k * m, 2);
  std::vector<double> c(n * m);
  kernels::serial::gemm_nn(a, b, c, n, k, m);
  const auto ref = naive(a, b, n, k, m);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("transposed kernels accumulate A^T dC and dC B^T") {
  const std::size_t n = 4, k = 6, m = 5;
  const auto a = randv(n * k, 3), b = randv(k * m, 4), dc = randv(n * m, 5);
  std::vector<double> da(n * k, 1.0), db(k * m, -1.0);
  kernels::serial::gemm_nt_acc(dc, b, da, n, k, m);
  kernels::serial::gemm_tn_acc(a, dc, db, n, k, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double s = 1.0;
      for (std::size_t j = 0; j < m; ++j) s += dc[i * m + j] * b[p * m + j];
      CHECK(da[i * k + p] == doctest::Approx(s).epsilon(1e-12));
    }
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < m; ++j) {
      double s = -1.0;
      for (std::size_t i = 0; i < n; ++i) s += a[i * k + p] * dc[i * m + j];
      CHECK(db[p * m + j] == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("OpenMP kernels are bit-identical to the serial ones") {
  // Large enough to cross the parallel threshold.
  const std::size_t n = 300, k = 64, m = 80;
  const auto a = randv(n * k, 6), b = randv(k * m, 7), dc = randv(n * m, 8);

  std::vector<double> c1(n * m), c2(n * m);
  kernels::serial::gemm_nn(a, b, c1, n, k, m);
  kernels::omp::gemm_nn(a, b, c2, n, k, m);
  CHECK(c1 == c2);

  std::vector<double> da1(n * k, 0.5), da2(n * k, 0.5);
  kernels::serial::gemm_nt_acc(dc, b, da1, n, k, m);
  kernels::omp::gemm_nt_acc(dc, b, da2, n, k, m);
  CHECK(da1 == da2);

  std::vector<double> db1(k * m, 0.25), db2(k * m, 0.25);
  kernels::serial::gemm_tn_acc(a, dc, db1, n, k, m);
  kernels::omp::gemm_tn_acc(a, dc, db2, n, k, m);
  CHECK(db1 == db2);

  std::vector<double> s1(m, 0.0), s2(m, 0.0);
  kernels::serial::col_sum_acc(dc, s1, n, m);
  kernels::omp::col_sum_acc(dc, s2, n, m);
  CHECK(s1 == s2);

  std::vector<double> c3(n * m);
  kernels::gemm_nn(a, b, c3, n, k, m);
  CHECK(c1 == c3);
}

TEST_CASE("thread query is consistent with the build") {
  CHECK(kernels::max_threads() >= 1);
  if (!kernels::openmp_enabled()) CHECK(kernels::max_threads() == 1);
}
