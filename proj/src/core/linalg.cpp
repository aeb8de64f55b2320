#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tensor.hpp"

namespace ron::linalg {

Matrix matmul(const Matrix& x, const Matrix& y) {
  if (x.cols != y.rows) fail_config("linalg::matmul: shape mismatch");
  Matrix out(x.rows, y.cols);
  ad::gemm_nn(x.rows, y.cols, x.cols, x.a.data(), y.a.data(), out.a.data(), false);
  return out;
}

Matrix transpose(const Matrix& x) {
  Matrix out(x.cols, x.rows);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) out.at(j, i) = x.at(i, j);
  return out;
}

QrResult householder_qr(const Matrix& t) {
  const int m = t.rows, n = t.cols;
  if (m < n) fail_config("householder_qr: matrix must be tall (rows >= cols)");
  Matrix a = t;  // working copy, becomes R in its upper triangle
  std::vector<std::vector<double>> reflectors;
  reflectors.reserve(n);

  for (int k = 0; k < n; ++k) {
    // build the Householder vector for column k
    double norm = 0.0;
    for (int i = k; i < m; ++i) norm += a.at(i, k) * a.at(i, k);
    norm = std::sqrt(norm);
    std::vector<double> v(m - k, 0.0);
    if (norm == 0.0) {
      reflectors.push_back(std::move(v));  // zero column, identity reflector
      continue;
    }
    const double alpha = a.at(k, k) >= 0.0 ? -norm : norm;
    for (int i = k; i < m; ++i) v[i - k] = a.at(i, k);
    v[0] -= alpha;
    double vnorm2 = 0.0;
    for (double x : v) vnorm2 += x * x;
    if (vnorm2 == 0.0) {
      reflectors.push_back(std::move(v));
      continue;
    }
    // apply H = I - 2 v v^T / (v^T v) to the trailing block
    for (int j = k; j < n; ++j) {
      double dot = 0.0;
      for (int i = k; i < m; ++i) dot += v[i - k] * a.at(i, j);
      const double f = 2.0 * dot / vnorm2;
      for (int i = k; i < m; ++i) a.at(i, j) -= f * v[i - k];
    }
    reflectors.push_back(std::move(v));
  }

  QrResult out;
  out.r = Matrix(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) out.r.at(i, j) = a.at(i, j);

  // accumulate Q = H_0 ... H_{n-1} applied to the thin identity
  out.q = Matrix(m, n);
  for (int j = 0; j < n; ++j) out.q.at(j, j) = 1.0;
  for (int k = n - 1; k >= 0; --k) {
    const auto& v = reflectors[k];
    double vnorm2 = 0.0;
    for (double x : v) vnorm2 += x * x;
    if (vnorm2 == 0.0) continue;
    for (int j = 0; j < n; ++j) {
      double dot = 0.0;
      for (int i = k; i < m; ++i) dot += v[i - k] * out.q.at(i, j);
      const double f = 2.0 * dot / vnorm2;
      for (int i = k; i < m; ++i) out.q.at(i, j) -= f * v[i - k];
    }
  }

  // normalize so diag(R) >= 0
  for (int k = 0; k < n; ++k) {
    if (out.r.at(k, k) < 0.0) {
      for (int j = k; j < n; ++j) out.r.at(k, j) = -out.r.at(k, j);
      for (int i = 0; i < m; ++i) out.q.at(i, k) = -out.q.at(i, k);
    }
  }
  return out;
}

SvdResult jacobi_svd(const Matrix& t) {
  const int m = t.rows, n = t.cols;
  if (m < n) fail_config("jacobi_svd: matrix must be tall (rows >= cols)");
  // column-major working copy of the columns for cache-friendly rotations
  std::vector<std::vector<double>> col(n, std::vector<double>(m));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i) col[j][i] = t.at(i, j);
  Matrix v(n, n);
  for (int j = 0; j < n; ++j) v.at(j, j) = 1.0;

  const double eps = 1e-15;
  const int max_sweeps = 60;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        const double* cp = col[p].data();
        const double* cq = col[q].data();
        for (int i = 0; i < m; ++i) {
          app += cp[i] * cp[i];
          aqq += cq[i] * cq[i];
          apq += cp[i] * cq[i];
        }
        if (std::abs(apq) <= eps * std::sqrt(app * aqq) || apq == 0.0) continue;
        rotated = true;
        const double tau = (aqq - app) / (2.0 * apq);
        const double tt = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double cs = 1.0 / std::sqrt(1.0 + tt * tt);
        const double sn = cs * tt;
        double* wp = col[p].data();
        double* wq = col[q].data();
        for (int i = 0; i < m; ++i) {
          const double xp = wp[i], xq = wq[i];
          wp[i] = cs * xp - sn * xq;
          wq[i] = sn * xp + cs * xq;
        }
        for (int i = 0; i < n; ++i) {
          const double vp = v.at(i, p), vq = v.at(i, q);
          v.at(i, p) = cs * vp - sn * vq;
          v.at(i, q) = sn * vp + cs * vq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += col[j][i] * col[j][i];
    sigma[j] = std::sqrt(s);
  }
  // sort non-increasing
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return sigma[a] > sigma[b]; });

  SvdResult out;
  out.u = Matrix(m, n);
  out.v = Matrix(n, n);
  out.sigma.resize(n);
  for (int jj = 0; jj < n; ++jj) {
    const int j = order[jj];
    out.sigma[jj] = sigma[j];
    const double inv = sigma[j] > 0.0 ? 1.0 / sigma[j] : 0.0;
    for (int i = 0; i < m; ++i) out.u.at(i, jj) = col[j][i] * inv;
    for (int i = 0; i < n; ++i) out.v.at(i, jj) = v.at(i, j);
  }
  return out;
}

Matrix invert_upper_triangular(const Matrix& r) {
  const int n = r.rows;
  if (r.rows != r.cols) fail_config("invert_upper_triangular: matrix must be square");
  for (int i = 0; i < n; ++i) {
    if (r.at(i, i) == 0.0) fail_numeric("invert_upper_triangular: singular diagonal");
  }
  Matrix inv(n, n);
  for (int j = 0; j < n; ++j) {
    inv.at(j, j) = 1.0 / r.at(j, j);
    for (int i = j - 1; i >= 0; --i) {
      double s = 0.0;
      for (int k = i + 1; k <= j; ++k) s += r.at(i, k) * inv.at(k, j);
      inv.at(i, j) = -s / r.at(i, i);
    }
  }
  return inv;
}

}  // namespace ron::linalg
