#include "remix/kernels.hpp"

#include <algorithm>

#ifdef REMIX_HAVE_OPENMP
#include <omp.h>
#endif

namespace remix::kernels {

namespace {

// Row kernels shared by both variants; the summation order of each output
// element is fixed here, which is what makes serial and omp bit-identical.
inline void nn_row(const double* a_row, const double* b, double* c_row, std::size_t k,
                   std::size_t m) {
  std::fill(c_row, c_row + m, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a_row[p];
    const double* b_row = b + p * m;
    for (std::size_t j = 0; j < m; ++j) c_row[j] += av * b_row[j];
  }
}

inline void nt_row(const double* dc_row, const double* b, double* da_row, std::size_t k,
                   std::size_t m) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* b_row = b + p * m;
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += dc_row[j] * b_row[j];
    da_row[p] += s;
  }
}

// One row p of dB: dB[p][:] += sum_i A[i][p] * dC[i][:], i ascending.
inline void tn_row(const double* a, const double* dc, double* db_row, std::size_t p,
                   std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double av = a[i * k + p];
    if (av == 0.0) continue;
    const double* dc_row = dc + i * m;
    for (std::size_t j = 0; j < m; ++j) db_row[j] += av * dc_row[j];
  }
}

}  // namespace

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) nn_row(a.data() + i * k, b.data(), c.data() + i * m, k, m);
}

void gemm_nt_acc(std::span<const double> dc, std::span<const double> b, std::span<double> da,
                 std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    nt_row(dc.data() + i * m, b.data(), da.data() + i * k, k, m);
}

void gemm_tn_acc(std::span<const double> a, std::span<const double> dc, std::span<double> db,
                 std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t p = 0; p < k; ++p) tn_row(a.data(), dc.data(), db.data() + p * m, p, n, k, m);
}

void col_sum_acc(std::span<const double> in, std::span<double> out, std::size_t rows,
                 std::size_t cols) {
  for (std::size_t j = 0; j < cols; ++j) {
    double s = out[j];
    for (std::size_t i = 0; i < rows; ++i) s += in[i * cols + j];
    out[j] = s;
  }
}

}  // namespace serial

namespace omp {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m) {
  const auto rows = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i)
    nn_row(a.data() + i * k, b.data(), c.data() + i * m, k, m);
}

void gemm_nt_acc(std::span<const double> dc, std::span<const double> b, std::span<double> da,
                 std::size_t n, std::size_t k, std::size_t m) {
  const auto rows = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i)
    nt_row(dc.data() + i * m, b.data(), da.data() + i * k, k, m);
}

void gemm_tn_acc(std::span<const double> a, std::span<const double> dc, std::span<double> db,
                 std::size_t n, std::size_t k, std::size_t m) {
  const auto rows = static_cast<long long>(k);
#pragma omp parallel for schedule(static)
  for (long long p = 0; p < rows; ++p)
    tn_row(a.data(), dc.data(), db.data() + p * m, static_cast<std::size_t>(p), n, k, m);
}

void col_sum_acc(std::span<const double> in, std::span<double> out, std::size_t rows,
                 std::size_t cols) {
  const auto ncols = static_cast<long long>(cols);
#pragma omp parallel for schedule(static)
  for (long long j = 0; j < ncols; ++j) {
    double s = out[j];
    for (std::size_t i = 0; i < rows; ++i) s += in[i * cols + j];
    out[j] = s;
  }
}

}  // namespace omp

bool openmp_enabled() {
#ifdef REMIX_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef REMIX_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {
bool go_parallel(std::size_t work) {
#ifdef REMIX_HAVE_OPENMP
  static const bool multi = omp_get_max_threads() > 1;
  return multi && work >= kParallelThreshold;
#else
  (void)work;
  return false;
#endif
}
}  // namespace

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m) {
  if (go_parallel(n * k * m)) return omp::gemm_nn(a, b, c, n, k, m);
  serial::gemm_nn(a, b, c, n, k, m);
}

void gemm_nt_acc(std::span<const double> dc, std::span<const double> b, std::span<double> da,
                 std::size_t n, std::size_t k, std::size_t m) {
  if (go_parallel(n * k * m)) return omp::gemm_nt_acc(dc, b, da, n, k, m);
  serial::gemm_nt_acc(dc, b, da, n, k, m);
}

void gemm_tn_acc(std::span<const double> a, std::span<const double> dc, std::span<double> db,
                 std::size_t n, std::size_t k, std::size_t m) {
  if (go_parallel(n * k * m)) return omp::gemm_tn_acc(a, dc, db, n, k, m);
  serial::gemm_tn_acc(a, dc, db, n, k, m);
}

void col_sum_acc(std::span<const double> in, std::span<double> out, std::size_t rows,
                 std::size_t cols) {
  if (go_parallel(rows * cols)) return omp::col_sum_acc(in, out, rows, cols);
  serial::col_sum_acc(in, out, rows, cols);
}

}  // namespace remix::kernels
