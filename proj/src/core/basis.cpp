#include "basis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace ron::basis {

namespace {

// reproducible plots: first nonzero component of each mode made positive
void normalize_mode_signs(linalg::Matrix& modes) {
  for (int j = 0; j < modes.cols; ++j) {
    double lead = 0.0;
    for (int i = 0; i < modes.rows; ++i) {
      if (modes.at(i, j) != 0.0) {
        lead = modes.at(i, j);
        break;
      }
    }
    if (lead < 0.0)
      for (int i = 0; i < modes.rows; ++i) modes.at(i, j) = -modes.at(i, j);
  }
}

void write_csv(const std::string& path, const std::string& header,
               const std::function<void(std::ofstream&)>& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail_io("cannot open for writing: " + path);
  out << header << "\n";
  body(out);
  if (!out) fail_io("write failure: " + path);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::pair<Spectrum, BasisSet> trunk_spectrum_and_modes(const deeponet::Model& model,
                                                       deeponet::FactorizeMethod method) {
  // raw trunk output (not the R^{-1}-rotated basis)
  const int n_p = static_cast<int>(model.grid_x.size());
  ad::Tape tape;
  std::vector<double> x_col(n_p);
  for (int i = 0; i < n_p; ++i) x_col[i] = model.norm.norm_x(model.grid_x[i]);
  ad::Tensor t_out = model.trunk.forward(tape, tape.constant({n_p, 1}, x_col));
  linalg::Matrix t_mat(n_p, model.latent_dim);
  t_mat.a = t_out.value();

  Spectrum spec;
  BasisSet basis;
  basis.x = model.grid_x;
  if (method == deeponet::FactorizeMethod::SVD) {
    auto svd = linalg::jacobi_svd(t_mat);
    spec.values = svd.sigma;  // already non-increasing
    spec.method = "svd";
    basis.modes = std::move(svd.u);
    basis.method = "svd";
  } else {
    auto qr = linalg::householder_qr(t_mat);
    const int k = qr.r.rows;
    std::vector<double> diag(k);
    for (int i = 0; i < k; ++i) diag[i] = qr.r.at(i, i);
    const double shift = std::abs(*std::min_element(diag.begin(), diag.end()));
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return diag[a] + shift > diag[b] + shift;
    });
    spec.method = "qr-shifted";
    spec.values.resize(k);
    basis.modes = linalg::Matrix(n_p, k);
    for (int jj = 0; jj < k; ++jj) {
      spec.values[jj] = diag[order[jj]] + shift;
      for (int i = 0; i < n_p; ++i) basis.modes.at(i, jj) = qr.q.at(i, order[jj]);
    }
    basis.method = "qr-shifted";
  }
  spec.source = "trunk:" + model.case_label;
  normalize_mode_signs(basis.modes);
  return {std::move(spec), std::move(basis)};
}

std::vector<Spectrum> layerwise_spectra(const deeponet::Model& model) {
  const int n_p = static_cast<int>(model.grid_x.size());
  ad::Tape tape;
  std::vector<double> x_col(n_p);
  for (int i = 0; i < n_p; ++i) x_col[i] = model.norm.norm_x(model.grid_x[i]);
  std::vector<ad::Tensor> layers =
      model.trunk.forward_collect(tape, tape.constant({n_p, 1}, x_col));
  std::vector<Spectrum> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const ad::Shape& s = layers[l].shape();
    linalg::Matrix m(s[0], s[1]);
    m.a = layers[l].value();
    // layer outputs are [N_p, width]; Jacobi wants tall input
    auto svd = s[0] >= s[1] ? linalg::jacobi_svd(m) : linalg::jacobi_svd(linalg::transpose(m));
    Spectrum spec;
    spec.values = svd.sigma;
    spec.method = "svd";
    spec.source = "layer" + std::to_string(l + 1);
    out.push_back(std::move(spec));
  }
  return out;
}

BranchCoefficients branch_coefficients(const deeponet::Model& model, const riemann::Dataset& ds,
                                       const std::vector<int>& indices) {
  const int n = static_cast<int>(indices.size());
  const int k_dim = model.latent_dim;
  std::vector<double> pl(n);
  for (int i = 0; i < n; ++i) pl[i] = ds.trajectories[indices[i]].p_l;
  const std::vector<double> bv = model.branch_coefficients(pl);

  BranchCoefficients out;
  out.mean_abs.assign(k_dim, {0.0, 0.0, 0.0});
  for (int r = 0; r < n; ++r)
    for (int k = 0; k < k_dim; ++k)
      for (int v = 0; v < 3; ++v)
        out.mean_abs[k][v] += std::abs(bv[(static_cast<std::size_t>(r) * k_dim + k) * 3 + v]);
  for (int k = 0; k < k_dim; ++k)
    for (int v = 0; v < 3; ++v) out.mean_abs[k][v] /= n;
  for (int v = 0; v < 3; ++v) {
    int best = 0;
    for (int k = 1; k < k_dim; ++k)
      if (out.mean_abs[k][v] > out.mean_abs[best][v]) best = k;
    out.argmax_mode[v] = best;
  }
  return out;
}

int LatentSvd::decay_index(double threshold) const {
  if (spectrum.values.empty()) return 0;
  const double s0 = spectrum.values.front();
  if (s0 == 0.0) return 0;
  for (std::size_t i = 0; i < spectrum.values.size(); ++i)
    if (spectrum.values[i] <= threshold * s0) return static_cast<int>(i);
  return static_cast<int>(spectrum.values.size());
}

std::vector<LatentSvd> unet_latent_svd(const unet::Model& model) {
  auto latents = model.latents();
  auto shapes = model.latent_shapes();
  std::vector<LatentSvd> out;
  for (std::size_t p = 0; p < latents.size(); ++p) {
    const int c = shapes[p][0], w = shapes[p][1];
    linalg::Matrix z(c, w);
    z.a = latents[p];
    LatentSvd entry;
    if (c >= w) {
      auto svd = linalg::jacobi_svd(z);  // z = U S V^T, spatial modes = V
      entry.spectrum.values = svd.sigma;
      entry.modes = std::move(svd.v);
    } else {
      auto svd = linalg::jacobi_svd(linalg::transpose(z));  // z^T = U S V^T, spatial modes = U
      entry.spectrum.values = svd.sigma;
      entry.modes = std::move(svd.u);
    }
    // scale the spatial modes by their singular values for plotting
    for (int j = 0; j < entry.modes.cols; ++j)
      for (int i = 0; i < entry.modes.rows; ++i)
        entry.modes.at(i, j) *= entry.spectrum.values[j];
    normalize_mode_signs(entry.modes);
    entry.spectrum.method = "svd";
    entry.spectrum.source = "latent-L" + std::to_string(p + 1);
    out.push_back(std::move(entry));
  }
  return out;
}

TruncationCurve optimal_truncation(const deeponet::Model& model, const riemann::Dataset& ds,
                                   int m_lo, int m_hi) {
  if (m_lo < 1) fail_config("optimal_truncation: m_lo must be at least 1");
  if (m_hi > model.latent_dim)
    fail_config("optimal_truncation: m_hi exceeds the latent dimension");
  if (m_lo > m_hi) fail_config("optimal_truncation: empty range");
  TruncationCurve curve;
  int best = -1;
  double best_total = 0.0;
  for (int m = m_lo; m <= m_hi; ++m) {
    metrics::ErrorReport rep = model.evaluate(ds, ds.test_indices, m);
    curve.m_values.push_back(m);
    curve.errors.push_back({rep.l2_rho_pct, rep.l2_u_pct, rep.l2_p_pct, rep.total_pct});
    if (best < 0 || rep.total_pct < best_total) {
      best = m;
      best_total = rep.total_pct;
      curve.at_argmin = curve.errors.back();
    }
  }
  curve.argmin_m = best;
  {
    metrics::ErrorReport full = model.evaluate(ds, ds.test_indices, model.latent_dim);
    curve.at_full = {full.l2_rho_pct, full.l2_u_pct, full.l2_p_pct, full.total_pct};
  }
  return curve;
}

// ---- emission ------------------------------------------------------------------

void write_spectrum_csv(const std::string& path, const Spectrum& s) {
  write_csv(path, "mode,value", [&](std::ofstream& out) {
    for (std::size_t i = 0; i < s.values.size(); ++i)
      out << i << "," << fmt(s.values[i]) << "\n";
  });
}

void write_modes_csv(const std::string& path, const BasisSet& b, int max_modes) {
  const int n_modes = max_modes < 0 ? b.modes.cols : std::min(max_modes, b.modes.cols);
  std::string header = "x";
  for (int j = 0; j < n_modes; ++j) header += ",mode" + std::to_string(j);
  write_csv(path, header, [&](std::ofstream& out) {
    for (int i = 0; i < b.modes.rows; ++i) {
      out << fmt(b.x.empty() ? i : b.x[i]);
      for (int j = 0; j < n_modes; ++j) out << "," << fmt(b.modes.at(i, j));
      out << "\n";
    }
  });
}

void write_truncation_csv(const std::string& path, const TruncationCurve& c) {
  write_csv(path, "m,l2_rho_pct,l2_u_pct,l2_p_pct,total_pct,is_argmin",
            [&](std::ofstream& out) {
              for (std::size_t i = 0; i < c.m_values.size(); ++i) {
                out << c.m_values[i];
                for (double v : c.errors[i]) out << "," << fmt(v);
                out << "," << (c.m_values[i] == c.argmin_m ? 1 : 0) << "\n";
              }
            });
}

void write_branch_coeffs_csv(const std::string& path, const BranchCoefficients& c) {
  write_csv(path, "mode,abs_rho,abs_u,abs_p", [&](std::ofstream& out) {
    for (std::size_t k = 0; k < c.mean_abs.size(); ++k) {
      out << k;
      for (double v : c.mean_abs[k]) out << "," << fmt(v);
      out << "\n";
    }
  });
}

void write_latent_modes_csv(const std::string& path, const LatentSvd& l, int max_modes) {
  const int n_modes = max_modes < 0 ? l.modes.cols : std::min(max_modes, l.modes.cols);
  std::string header = "index";
  for (int j = 0; j < n_modes; ++j) header += ",mode" + std::to_string(j);
  write_csv(path, header, [&](std::ofstream& out) {
    for (int i = 0; i < l.modes.rows; ++i) {
      out << i;
      for (int j = 0; j < n_modes; ++j) out << "," << fmt(l.modes.at(i, j));
      out << "\n";
    }
  });
}

}  // namespace ron::basis
