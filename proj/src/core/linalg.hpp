#pragma once

// Dense linear algebra on plain row-major buffers: thin Householder QR,
// one-sided Jacobi SVD, triangular inversion. Sized for tall-skinny
// factorizations of trunk outputs (a few hundred rows/columns).

#include <vector>

#include "common.hpp"

namespace ron::linalg {

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;  // row-major

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
  double& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
};

Matrix matmul(const Matrix& x, const Matrix& y);
Matrix transpose(const Matrix& x);

// Thin QR of a tall matrix (rows >= cols) with the R diagonal normalized
// positive. Q: [rows, cols] orthonormal columns, R: [cols, cols] upper
// triangular.
struct QrResult {
  Matrix q;
  Matrix r;
};
QrResult householder_qr(const Matrix& t);

// Thin SVD via one-sided Jacobi: T = U * diag(sigma) * V^T, singular values
// sorted non-increasing. U: [rows, cols], V: [cols, cols].
struct SvdResult {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;
};
SvdResult jacobi_svd(const Matrix& t);

// Inverse of an upper-triangular matrix by back substitution.
Matrix invert_upper_triangular(const Matrix& r);

}  // namespace ron::linalg
