#ifndef REMIX_KERNELS_HPP_
#define REMIX_KERNELS_HPP_

#include <cstddef>
#include <span>

// Dense row-major matrix kernels behind Tensor::matmul and friends.
//
// Every kernel exists twice: a serial reference in kernels::serial and an
// OpenMP version in kernels::omp. Both visit each output element with the
// same summation order, so their results are bit-identical; the serial one
// is kept as the test oracle and benchmark baseline. The unqualified
// functions in kernels:: dispatch to omp when it is compiled in and the
// problem is large enough to amortize the fork.
namespace remix::kernels {

// C[n x m] = A[n x k] * B[k x m]
// dA[n x k] += dC[n x m] * B[k x m]^T
// dB[k x m] += A[n x k]^T * dC[n x m]
namespace serial {
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m);
void gemm_nt_acc(std::span<const double> dc, std::span<const double> b, std::span<double> da,
                 std::size_t n, std::size_t k, std::size_t m);
void gemm_tn_acc(std::span<const double> a, std::span<const double> dc, std::span<double> db,
                 std::size_t n, std::size_t k, std::size_t m);
/// out[j] += sum_i in[i][j] for a rows x cols matrix.
void col_sum_acc(std::span<const double> in, std::span<double> out, std::size_t rows,
                 std::size_t cols);
}  // namespace serial

namespace omp {
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m);
void gemm_nt_acc(std::span<const double> dc, std::span<const double> b, std::span<double> da,
                 std::size_t n, std::size_t k, std::size_t m);
void gemm_tn_acc(std::span<const double> a, std::span<const double> dc, std::span<double> db,
                 std::size_t n, std::size_t k, std::size_t m);
void col_sum_acc(std::span<const double> in, std::span<double> out, std::size_t rows,
                 std::size_t cols);
}  // namespace omp

bool openmp_enabled();
int max_threads();

/// Below this many multiply-adds the dispatchers stay serial.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m);
void gemm_nt_acc(std::span<const double> dc, std::span<const double> b, std::span<double> da,
                 std::size_t n, std::size_t k, std::size_t m);
void gemm_tn_acc(std::span<const double> a, std::span<const double> dc, std::span<double> db,
                 std::size_t n, std::size_t k, std::size_t m);
void col_sum_acc(std::span<const double> in, std::span<double> out, std::size_t rows,
                 std::size_t cols);

}  // namespace remix::kernels

#endif  // REMIX_KERNELS_HPP_
