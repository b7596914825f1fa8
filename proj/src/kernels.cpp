#include "dfgl/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dfgl::kern {

namespace {

#ifdef _OPENMP
Backend g_backend = Backend::OpenMP;
#else
Backend g_backend = Backend::Serial;
#endif

// OpenMP splits work across output rows; each element keeps the same serial
// reduction order, so both backends are bit-identical. Nested calls (a worker
// fan-out already running in parallel) fall back to the serial path.
inline bool use_parallel(long work) {
#ifdef _OPENMP
  return g_backend == Backend::OpenMP && !omp_in_parallel() && work >= 1 << 14;
#else
  (void)work;
  return false;
#endif
}

}  // namespace

void set_backend(Backend b) {
#ifndef _OPENMP
  if (b == Backend::OpenMP) throw std::runtime_error("built without OpenMP");
#endif
  g_backend = b;
}

Backend backend() { return g_backend; }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matmul(const Matrix& A, const Matrix& B, Matrix& C) {
  assert(A.cols == B.rows);
  C = Matrix(A.rows, B.cols);
  const long work = static_cast<long>(A.rows) * A.cols * B.cols;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (use_parallel(work))
#endif
  for (int i = 0; i < A.rows; ++i) {
    const double* arow = A.row(i);
    double* crow = C.row(i);
    for (int k = 0; k < A.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = B.row(k);
      for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  (void)work;
}

void matmul_at_b(const Matrix& A, const Matrix& B, Matrix& C) {
  assert(A.rows == B.rows);
  C = Matrix(A.cols, B.cols);
  const long work = static_cast<long>(A.rows) * A.cols * B.cols;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (use_parallel(work))
#endif
  for (int i = 0; i < A.cols; ++i) {
    double* crow = C.row(i);
    for (int k = 0; k < A.rows; ++k) {
      const double aki = A.at(k, i);
      if (aki == 0.0) continue;
      const double* brow = B.row(k);
      for (int j = 0; j < B.cols; ++j) crow[j] += aki * brow[j];
    }
  }
  (void)work;
}

void matmul_a_bt(const Matrix& A, const Matrix& B, Matrix& C) {
  assert(A.cols == B.cols);
  C = Matrix(A.rows, B.rows);
  const long work = static_cast<long>(A.rows) * A.cols * B.rows;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (use_parallel(work))
#endif
  for (int i = 0; i < A.rows; ++i) {
    const double* arow = A.row(i);
    double* crow = C.row(i);
    for (int j = 0; j < B.rows; ++j) {
      const double* brow = B.row(j);
      double s = 0.0;
      for (int k = 0; k < A.cols; ++k) s += arow[k] * brow[k];
      crow[j] = s;
    }
  }
  (void)work;
}

void add_row_vector(Matrix& M, std::span<const double> bias) {
  assert(static_cast<size_t>(M.cols) == bias.size());
  for (int i = 0; i < M.rows; ++i) {
    double* r = M.row(i);
    for (int j = 0; j < M.cols; ++j) r[j] += bias[j];
  }
}

void relu_inplace(Matrix& M) {
  for (double& x : M.a) x = x > 0.0 ? x : 0.0;
}

void relu_backward(const Matrix& Z, const Matrix& dH, Matrix& dZ) {
  assert(Z.rows == dH.rows && Z.cols == dH.cols);
  dZ = Matrix(Z.rows, Z.cols);
  for (size_t i = 0; i < Z.a.size(); ++i) dZ.a[i] = Z.a[i] > 0.0 ? dH.a[i] : 0.0;
}

void col_sum(const Matrix& M, std::span<double> out) {
  assert(static_cast<size_t>(M.cols) == out.size());
  std::fill(out.begin(), out.end(), 0.0);
  for (int i = 0; i < M.rows; ++i) {
    const double* r = M.row(i);
    for (int j = 0; j < M.cols; ++j) out[j] += r[j];
  }
}

void segment_mean(const Matrix& src, std::span<const int> offsets,
                  std::span<const int> indices, Matrix& out) {
  const int n = static_cast<int>(offsets.size()) - 1;
  out = Matrix(n, src.cols);
  const long work = static_cast<long>(indices.size()) * src.cols;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (use_parallel(work))
#endif
  for (int i = 0; i < n; ++i) {
    const int lo = offsets[i], hi = offsets[i + 1];
    if (lo == hi) continue;  // empty neighborhood -> zero aggregate
    double* orow = out.row(i);
    for (int p = lo; p < hi; ++p) {
      const double* srow = src.row(indices[p]);
      for (int j = 0; j < src.cols; ++j) orow[j] += srow[j];
    }
    const double inv = 1.0 / (hi - lo);
    for (int j = 0; j < src.cols; ++j) orow[j] *= inv;
  }
  (void)work;
}

void segment_mean_backward(const Matrix& d_out, std::span<const int> offsets,
                           std::span<const int> indices, Matrix& d_src) {
  const int n = static_cast<int>(offsets.size()) - 1;
  assert(d_out.rows == n);
  // Scatter writes collide across segments; keep this one serial.
  for (int i = 0; i < n; ++i) {
    const int lo = offsets[i], hi = offsets[i + 1];
    if (lo == hi) continue;
    const double inv = 1.0 / (hi - lo);
    const double* grow = d_out.row(i);
    for (int p = lo; p < hi; ++p) {
      double* srow = d_src.row(indices[p]);
      for (int j = 0; j < d_out.cols; ++j) srow[j] += grow[j] * inv;
    }
  }
}

}  // namespace dfgl::kern
