#include "doctest.h"

#include <random>
#include <tuple>
#include <vector>

#include "dfgl/kernels.hpp"

using dfgl::kern::Backend;
using dfgl::kern::Matrix;

namespace {

Matrix random_matrix(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.a) v = n(rng);
  return m;
}

Matrix naive_matmul(const Matrix& A, const Matrix& B) {
  Matrix C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i)
    for (int k = 0; k < A.cols; ++k)
      for (int j = 0; j < B.cols; ++j) C.at(i, j) += A.at(i, k) * B.at(k, j);
  return C;
}

Matrix transpose(const Matrix& A) {
  Matrix T(A.cols, A.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) T.at(j, i) = A.at(i, j);
  return T;
}

struct BackendGuard {
  Backend saved = dfgl::kern::backend();
  ~BackendGuard() { dfgl::kern::set_backend(saved); }
};

}  // namespace

TEST_CASE("matmul variants match the naive triple loop") {
  BackendGuard guard;
  std::mt19937_64 rng(11);
  const std::vector<std::tuple<int, int, int>> shapes{
      {3, 4, 5}, {1, 7, 2}, {64, 64, 64}, {33, 17, 9}};
  for (auto [r, k, c] : shapes) {
    Matrix A = random_matrix(r, k, rng), B = random_matrix(k, c, rng);
    Matrix C(r, c);

    for (Backend b : {Backend::Serial, Backend::OpenMP}) {
      dfgl::kern::set_backend(b);

      dfgl::kern::matmul(A, B, C);
      Matrix want = naive_matmul(A, B);
      for (size_t i = 0; i < C.size(); ++i) CHECK(C.a[i] == doctest::Approx(want.a[i]).epsilon(1e-12));

      Matrix At = transpose(A);
      Matrix C2(r, c);
      dfgl::kern::matmul_at_b(At, B, C2);
      for (size_t i = 0; i < C2.size(); ++i) CHECK(C2.a[i] == doctest::Approx(want.a[i]).epsilon(1e-12));

      Matrix Bt = transpose(B);
      Matrix C3(r, c);
      dfgl::kern::matmul_a_bt(A, Bt, C3);
      for (size_t i = 0; i < C3.size(); ++i) CHECK(C3.a[i] == doctest::Approx(want.a[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("elementwise kernels") {
  BackendGuard guard;
  std::mt19937_64 rng(5);
  Matrix M = random_matrix(50, 20, rng);

  SUBCASE("add_row_vector") {
    std::vector<double> bias(20);
    for (auto& v : bias) v = 0.25;
    Matrix got = M;
    dfgl::kern::add_row_vector(got, bias);
    for (int i = 0; i < M.rows; ++i)
      for (int j = 0; j < M.cols; ++j) CHECK(got.at(i, j) == M.at(i, j) + 0.25);
  }

  SUBCASE("relu and its backward mask") {
    Matrix Z = M, H = M;
    dfgl::kern::relu_inplace(H);
    for (size_t i = 0; i < H.size(); ++i) CHECK(H.a[i] == (Z.a[i] > 0 ? Z.a[i] : 0.0));

    Matrix dH = random_matrix(50, 20, rng), dZ(50, 20);
    dfgl::kern::relu_backward(Z, dH, dZ);
    for (size_t i = 0; i < dZ.size(); ++i)
      CHECK(dZ.a[i] == (Z.a[i] > 0 ? dH.a[i] : 0.0));
  }

  SUBCASE("col_sum") {
    std::vector<double> got(20);
    dfgl::kern::col_sum(M, got);
    for (int j = 0; j < M.cols; ++j) {
      double want = 0;
      for (int i = 0; i < M.rows; ++i) want += M.at(i, j);
      CHECK(got[j] == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("segment_mean handles empty segments and matches a naive oracle") {
  BackendGuard guard;
  std::mt19937_64 rng(17);
  Matrix src = random_matrix(30, 6, rng);

  // segments: {0,1,2}, {}, {29}, {5,5}
  std::vector<int> offsets{0, 3, 3, 4, 6};
  std::vector<int> indices{0, 1, 2, 29, 5, 5};
  Matrix out(4, 6);
  dfgl::kern::segment_mean(src, offsets, indices, out);

  for (int j = 0; j < 6; ++j) {
    CHECK(out.at(0, j) ==
          doctest::Approx((src.at(0, j) + src.at(1, j) + src.at(2, j)) / 3.0));
    CHECK(out.at(1, j) == 0.0);
    CHECK(out.at(2, j) == src.at(29, j));
    CHECK(out.at(3, j) == doctest::Approx(src.at(5, j)));
  }
}

TEST_CASE("segment_mean_backward is the adjoint of segment_mean") {
  BackendGuard guard;
  std::mt19937_64 rng(23);
  const int n_src = 40, n_out = 12, dim = 5;
  Matrix src = random_matrix(n_src, dim, rng);

  std::vector<int> offsets(n_out + 1, 0);
  std::vector<int> indices;
  std::uniform_int_distribution<int> seg_len(0, 6), pick(0, n_src - 1);
  for (int i = 0; i < n_out; ++i) {
    int len = seg_len(rng);
    for (int k = 0; k < len; ++k) indices.push_back(pick(rng));
    offsets[i + 1] = static_cast<int>(indices.size());
  }

  Matrix out(n_out, dim);
  dfgl::kern::segment_mean(src, offsets, indices, out);
  Matrix d_out = random_matrix(n_out, dim, rng);
  Matrix d_src(n_src, dim);
  dfgl::kern::segment_mean_backward(d_out, offsets, indices, d_src);

  double lhs = 0, rhs = 0;  // <d_out, M src> == <M^T d_out, src>
  for (size_t i = 0; i < out.size(); ++i) lhs += d_out.a[i] * out.a[i];
  for (size_t i = 0; i < src.size(); ++i) rhs += d_src.a[i] * src.a[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("serial and OpenMP backends are bit-identical") {
  BackendGuard guard;
  std::mt19937_64 rng(31);

  // sizes above the parallel work threshold so the OpenMP path actually runs
  Matrix A = random_matrix(180, 70, rng), B = random_matrix(70, 90, rng);
  Matrix C1(180, 90), C2(180, 90);
  dfgl::kern::set_backend(Backend::Serial);
  dfgl::kern::matmul(A, B, C1);
  dfgl::kern::set_backend(Backend::OpenMP);
  dfgl::kern::matmul(A, B, C2);
  CHECK(C1.a == C2.a);

  Matrix src = random_matrix(3000, 16, rng);
  std::vector<int> offsets(1001, 0);
  std::vector<int> indices;
  std::uniform_int_distribution<int> seg_len(0, 8), pick(0, 2999);
  for (int i = 0; i < 1000; ++i) {
    int len = seg_len(rng);
    for (int k = 0; k < len; ++k) indices.push_back(pick(rng));
    offsets[i + 1] = static_cast<int>(indices.size());
  }
  Matrix o1(1000, 16), o2(1000, 16);
  dfgl::kern::set_backend(Backend::Serial);
  dfgl::kern::segment_mean(src, offsets, indices, o1);
  dfgl::kern::set_backend(Backend::OpenMP);
  dfgl::kern::segment_mean(src, offsets, indices, o2);
  CHECK(o1.a == o2.a);

  Matrix Z = random_matrix(200, 120, rng), dH = random_matrix(200, 120, rng);
  Matrix z1(200, 120), z2(200, 120);
  dfgl::kern::set_backend(Backend::Serial);
  dfgl::kern::relu_backward(Z, dH, z1);
  dfgl::kern::set_backend(Backend::OpenMP);
  dfgl::kern::relu_backward(Z, dH, z2);
  CHECK(z1.a == z2.a);
}
