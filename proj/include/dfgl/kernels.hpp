#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dfgl::kern {

/// Dense row-major matrix of doubles. All model math in the project runs
/// through the kernels below so the serial and OpenMP backends stay
/// interchangeable and bit-identical.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }
  std::span<double> row_span(int r) { return {row(r), static_cast<size_t>(cols)}; }
  std::span<const double> row_span(int r) const { return {row(r), static_cast<size_t>(cols)}; }
  size_t size() const { return a.size(); }
  void set_zero() { std::fill(a.begin(), a.end(), 0.0); }
};

enum class Backend { Serial, OpenMP };

/// Select the kernel backend process-wide. Defaults to OpenMP when compiled
/// with it. Both backends produce bit-identical results: parallel loops
/// split over output rows only, with per-element reduction order unchanged.
void set_backend(Backend b);
Backend backend();
int max_threads();

/// C = A * B
void matmul(const Matrix& A, const Matrix& B, Matrix& C);
/// C = A^T * B
void matmul_at_b(const Matrix& A, const Matrix& B, Matrix& C);
/// C = A * B^T
void matmul_a_bt(const Matrix& A, const Matrix& B, Matrix& C);

/// Adds `bias` (length = cols) to every row of M.
void add_row_vector(Matrix& M, std::span<const double> bias);
/// M = max(M, 0)
void relu_inplace(Matrix& M);
/// dZ = dH where pre-activation Z > 0, else 0. Shapes must match.
void relu_backward(const Matrix& Z, const Matrix& dH, Matrix& dZ);
/// out[c] = sum over rows of M[.,c]
void col_sum(const Matrix& M, std::span<double> out);

/// Segment mean over gathered rows: for each output row i, averages
/// src rows indices[offsets[i]..offsets[i+1]) ; empty segment -> zero row.
void segment_mean(const Matrix& src, std::span<const int> offsets,
                  std::span<const int> indices, Matrix& out);
/// Backward of segment_mean: scatters d_out rows back onto d_src
/// (accumulating, each contribution scaled by 1/segment_size).
void segment_mean_backward(const Matrix& d_out, std::span<const int> offsets,
                           std::span<const int> indices, Matrix& d_src);

}  // namespace dfgl::kern
