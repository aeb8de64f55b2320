#pragma once

// Interpretability suite over trained operators: trunk spectra and modes
// (QR vs SVD), layer-wise information flow, branch coefficient profiles,
// U-Net latent spectra, and the basis truncation sweep.

#include <array>
#include <string>
#include <vector>

#include "deeponet.hpp"
#include "unet.hpp"

namespace ron::basis {

struct Spectrum {
  std::vector<double> values;  // non-increasing after the method's sort
  std::string method;          // "svd" | "qr-shifted"
  std::string source;
};

struct BasisSet {
  linalg::Matrix modes;  // columns in spectrum order, sign-normalized
  std::vector<double> x;
  std::string method;
};

struct TruncationCurve {
  std::vector<int> m_values;
  std::vector<std::array<double, 4>> errors;  // rho, u, p, total (percent)
  int argmin_m = 0;
  std::array<double, 4> at_argmin{};
  std::array<double, 4> at_full{};
};

// Fresh factorization of the trained trunk output by the requested method.
// SVD spectrum = singular values; QR spectrum = diag(R) shifted by |min|,
// sorted descending, with modes reordered to match.
std::pair<Spectrum, BasisSet> trunk_spectrum_and_modes(const deeponet::Model& model,
                                                       deeponet::FactorizeMethod method);

// One SVD spectrum per cumulative hidden-layer output plus the final linear
// layer, evaluated on the model's grid.
std::vector<Spectrum> layerwise_spectra(const deeponet::Model& model);

// Mean |branch coefficient| per mode and variable over the given samples.
struct BranchCoefficients {
  std::vector<std::array<double, 3>> mean_abs;  // [K][rho,u,p]
  std::array<int, 3> argmax_mode{};
};
BranchCoefficients branch_coefficients(const deeponet::Model& model, const riemann::Dataset& ds,
                                       const std::vector<int>& indices);

// Per-level SVD of the U-Net encoder latents, modes along the width axis.
struct LatentSvd {
  Spectrum spectrum;
  linalg::Matrix modes;  // [W_p, n_modes], scaled by singular value
  // index where sigma/sigma_0 first drops to the threshold (spectrum length
  // if it never does)
  int decay_index(double threshold) const;
};
std::vector<LatentSvd> unet_latent_svd(const unet::Model& model);

// Truncated-inference error sweep over m in [m_lo, m_hi] on the given split.
TruncationCurve optimal_truncation(const deeponet::Model& model, const riemann::Dataset& ds,
                                   int m_lo, int m_hi);

// ---- CSV / JSON emission ----------------------------------------------------

void write_spectrum_csv(const std::string& path, const Spectrum& s);
void write_modes_csv(const std::string& path, const BasisSet& b, int max_modes = -1);
void write_truncation_csv(const std::string& path, const TruncationCurve& c);
void write_branch_coeffs_csv(const std::string& path, const BranchCoefficients& c);
void write_latent_modes_csv(const std::string& path, const LatentSvd& l, int max_modes = -1);

}  // namespace ron::basis
