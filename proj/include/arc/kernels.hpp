#pragma once

#include "arc/tensor.hpp"

// Dense matrix products used by the autodiff ops. The default versions split
// output rows across OpenMP threads once the product is large enough; every
// output element is summed in the same order regardless of thread count, so
// results are bitwise identical to a single-threaded run.
//
// `accumulate` adds into c instead of overwriting it; c must then already
// have the output shape.
namespace arc::kernels {

/// c = a * b^T with a (m x k), b (n x k).
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
/// c = a * b with a (m x k), b (k x n).
void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
/// c = a^T * b with a (k x m), b (k x n).
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);

/// Products below this many multiply-adds always run on the calling thread.
inline constexpr long kParallelWorkThreshold = 1L << 16;

namespace reference {
// Straight triple loops; kept as the oracle for the kernels above.
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
}  // namespace reference

}  // namespace arc::kernels
