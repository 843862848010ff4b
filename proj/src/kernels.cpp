#include "arc/kernels.hpp"

#include <omp.h>

namespace arc::kernels {

namespace {

void prepare(Matrix& c, int rows, int cols, bool accumulate, const char* op) {
  if (accumulate) {
    if (c.rows() != rows || c.cols() != cols)
      throw std::invalid_argument(std::string(op) + ": accumulator has shape " + c.shape_string());
  } else if (c.rows() != rows || c.cols() != cols) {
    c = Matrix(rows, cols);
  } else {
    c.fill(0.0);
  }
}

bool worth_parallel(long m, long n, long k) { return m > 1 && m * n * k >= kParallelWorkThreshold; }

}  // namespace

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("matmul_nt: inner dimensions " + a.shape_string() + " vs " + b.shape_string());
  const int m = a.rows();
  const int n = b.rows();
  const int k = a.cols();
  prepare(c, m, n, accumulate, "matmul_nt");
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
#pragma omp parallel for schedule(static) if (worth_parallel(m, n, k))
  for (int i = 0; i < m; ++i) {
    const double* ai = pa + static_cast<std::size_t>(i) * k;
    double* ci = pc + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = pb + static_cast<std::size_t>(j) * k;
      double sum = 0.0;
      for (int t = 0; t < k; ++t) sum += ai[t] * bj[t];
      ci[j] += sum;
    }
  }
}

void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul_nn: inner dimensions " + a.shape_string() + " vs " + b.shape_string());
  const int m = a.rows();
  const int n = b.cols();
  const int k = a.cols();
  prepare(c, m, n, accumulate, "matmul_nn");
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
#pragma omp parallel for schedule(static) if (worth_parallel(m, n, k))
  for (int i = 0; i < m; ++i) {
    const double* ai = pa + static_cast<std::size_t>(i) * k;
    double* ci = pc + static_cast<std::size_t>(i) * n;
    for (int t = 0; t < k; ++t) {
      const double av = ai[t];
      if (av == 0.0) continue;
      const double* bt = pb + static_cast<std::size_t>(t) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.rows() != b.rows())
    throw std::invalid_argument("matmul_tn: inner dimensions " + a.shape_string() + " vs " + b.shape_string());
  const int m = a.cols();
  const int n = b.cols();
  const int k = a.rows();
  prepare(c, m, n, accumulate, "matmul_tn");
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  // Row i of c only depends on column i of a, so rows split cleanly.
#pragma omp parallel for schedule(static) if (worth_parallel(m, n, k))
  for (int i = 0; i < m; ++i) {
    double* ci = pc + static_cast<std::size_t>(i) * n;
    for (int t = 0; t < k; ++t) {
      const double av = pa[static_cast<std::size_t>(t) * m + i];
      if (av == 0.0) continue;
      const double* bt = pb + static_cast<std::size_t>(t) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

namespace reference {

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.cols() != b.cols()) throw std::invalid_argument("reference::matmul_nt: inner dimensions");
  if (!accumulate) c = Matrix(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.rows(); ++j) {
      double sum = 0.0;
      for (int t = 0; t < a.cols(); ++t) sum += a(i, t) * b(j, t);
      c(i, j) += sum;
    }
}

void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.cols() != b.rows()) throw std::invalid_argument("reference::matmul_nn: inner dimensions");
  if (!accumulate) c = Matrix(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j)
      for (int t = 0; t < a.cols(); ++t) c(i, j) += a(i, t) * b(t, j);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.rows() != b.rows()) throw std::invalid_argument("reference::matmul_tn: inner dimensions");
  if (!accumulate) c = Matrix(a.cols(), b.cols());
  for (int i = 0; i < a.cols(); ++i)
    for (int j = 0; j < b.cols(); ++j)
      for (int t = 0; t < a.rows(); ++t) c(i, j) += a(t, i) * b(t, j);
}

}  // namespace reference

}  // namespace arc::kernels
