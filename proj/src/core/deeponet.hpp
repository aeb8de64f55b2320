#pragma once

// DeepONet operator: branch x trunk contraction over a latent dimension,
// trained either in one step (joint data-mismatch loss) or in two steps
// (trunk + coefficient matrix first, QR/SVD orthonormalization, then branch
// fitted to the rotated coefficients).

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "linalg.hpp"
#include "metrics.hpp"
#include "mlp.hpp"
#include "riemann.hpp"

namespace ron::deeponet {

enum class FactorizeMethod { QR, SVD };
std::string method_to_string(FactorizeMethod m);
FactorizeMethod method_from_string(const std::string& s);

// Input/output conventions shared by both operators: network inputs live in
// [-1,1]; extreme-ratio cases feed log10(p_l) to the branch and train on
// log(rho), log(p) targets (exponentiated back at inference).
struct Normalization {
  double p_lo = 0.0, p_hi = 1.0;  // branch range (in log10 space when log10_p)
  bool log10_p = false;
  double x_lo = 0.0, x_hi = 1.0;
  bool log_fields = false;

  double norm_p(double p_l) const;
  double norm_x(double x) const;
  static Normalization for_dataset(const riemann::Dataset& ds, bool log_fields);
};

struct TwoStepArtifacts {
  FactorizeMethod method = FactorizeMethod::SVD;
  linalg::Matrix a_star;   // [K, N_train*V], columns sample-major then variable
  linalg::Matrix q_star;   // [N_p, K] orthonormal columns
  linalg::Matrix r_star;   // [K, K]
  linalg::Matrix r_inv;    // [K, K]
  std::vector<double> sigma;  // singular values (SVD only)
};

struct Model {
  std::string kind;  // "deeponet-1step" | "deeponet-2step"
  nn::MLP branch;    // input 1 -> K*V
  nn::MLP trunk;     // input 1 -> K
  int latent_dim = 0;
  static constexpr int kVars = 3;
  Normalization norm;
  std::vector<double> grid_x;  // training grid
  std::string case_label;
  std::uint64_t seed = 0;
  std::int64_t steps_taken = 0;
  std::optional<TwoStepArtifacts> artifacts;
  // fixed affine output map for the branch net (two-step training fits the
  // net against standardized coefficients; empty = identity)
  std::vector<double> branch_scale;  // [K*V]
  std::vector<double> branch_shift;  // [K*V]

  // physical branch coefficients, flat [n, K, V]
  std::vector<double> branch_coefficients(const std::vector<double>& p_l_values) const;

  // fields in physical space, flat [n, N_p, 3]; truncate_to < 0 keeps all
  // modes (two-step inference contracts over the first m basis columns)
  std::vector<double> infer(const std::vector<double>& p_l_values, int truncate_to = -1) const;

  // trunk basis on the training grid: one-step = raw trunk output,
  // two-step = T(theta*) R^{-1} (equals Q* up to factorization error)
  linalg::Matrix trunk_basis() const;

  metrics::ErrorReport evaluate(const riemann::Dataset& ds, const std::vector<int>& indices,
                                int truncate_to = -1) const;
};

struct TrainOptions {
  int width = 150;
  int hidden_layers = 5;
  int latent_dim = 0;  // 0 = width
  nn::Activation activation = nn::Activation::RowdyTanh;
  FactorizeMethod method = FactorizeMethod::SVD;
  int steps = 6000;         // one-step budget (full-batch Adam steps)
  int trunk_steps = 4000;   // two-step stage budgets
  int branch_steps = 3000;
  double lr = 1e-3;
  double weight_decay = 1e-6;  // one-step L2 regularization
  double clamp_eps = 1e-10;
  bool log_fields = false;  // pre-log-transform targets (extreme ratios)
  bool pseudo_inverse = false;  // rank-deficient R fallback
  std::uint64_t seed = 0;
  std::function<void(int step, double loss)> on_step;
};

struct TrainResult {
  Model model;
  double final_loss = 0.0;
  double min_clamped = std::numeric_limits<double>::infinity();
  double first_loss = 0.0;
  double wall_seconds = 0.0;
};

// Stage outputs of the two-step procedure, exposed separately so each stage
// is testable on its own.
struct TrunkStage {
  nn::MLP trunk;
  linalg::Matrix a_star;         // [K, N_train*V]
  linalg::Matrix trunk_outputs;  // T(theta*) on the grid, [N_p, K]
  double final_loss = 0.0;
  double first_loss = 0.0;
  double min_clamped = std::numeric_limits<double>::infinity();
};

TrainResult train_one_step(const riemann::Dataset& ds, const TrainOptions& opts);

TrunkStage train_trunk(const riemann::Dataset& ds, const TrainOptions& opts);

// Q*R* = T. QR: thin Householder with positive diagonal; SVD: Q* = U,
// R* = Sigma V^T. Errors on rank deficiency unless pseudo_inverse is set.
TwoStepArtifacts factorize_trunk(const linalg::Matrix& trunk_outputs, FactorizeMethod method,
                                 bool pseudo_inverse = false);

// Branch net fitted to R* A_hat* behind a fixed affine output map that
// standardizes the sigma-scaled targets; target is [K, V] per sample.
nn::MLP train_branch(const riemann::Dataset& ds, const TwoStepArtifacts& artifacts,
                     const TrainOptions& opts, double* final_loss = nullptr,
                     std::vector<double>* scale_out = nullptr,
                     std::vector<double>* shift_out = nullptr);

// Full two-step pipeline: trunk stage, factorization, branch stage, assembly.
TrainResult train_two_step(const riemann::Dataset& ds, const TrainOptions& opts);

// ---- checkpoints -----------------------------------------------------------

void save_model(const Model& m, const std::string& path,
                const nlohmann::ordered_json& provenance = {});
Model load_model(const std::string& path);

// ---- ensembles ---------------------------------------------------------------

struct EnsembleResult {
  std::vector<TrainResult> members;  // seeded base_seed + index
  std::vector<metrics::ErrorReport> reports;
  metrics::EnsembleStats stats;
  int best_member = 0;  // lowest total test error
};

using TrainFn = std::function<TrainResult(const TrainOptions&)>;

// Members run in parallel (RON_THREADS cap), outputs ordered by member index.
EnsembleResult train_ensemble(const riemann::Dataset& ds, const TrainOptions& opts, int n_members,
                              bool two_step);

}  // namespace ron::deeponet
