#pragma once

// Relative L2 error metrics and ensemble statistics in the paper's reporting
// shape: per-variable percentages, total = mean over (rho, u, p).

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"

namespace ron::metrics {

using Json = nlohmann::ordered_json;

struct ErrorReport {
  double l2_rho_pct = 0.0;
  double l2_u_pct = 0.0;
  double l2_p_pct = 0.0;
  double total_pct = 0.0;
  std::vector<std::array<double, 3>> per_sample;  // percent per variable
  // wall-clock is reported on stdout and in sidecar timing files only, so
  // report files stay bit-identical across reruns
  double wall_seconds = 0.0;

  Json to_json(bool include_per_sample = false) const;
};

// D, G: flat [n_samples, n_points, 3] row-major; per-sample relative L2 in
// percent per variable, averaged over samples.
ErrorReport relative_l2(const std::vector<double>& predicted, const std::vector<double>& exact,
                        int n_samples, int n_points);

struct EnsembleStats {
  int n_runs = 0;
  std::array<double, 4> mean{};  // rho, u, p, total
  std::array<double, 4> stddev{};

  Json to_json() const;
};

// Mean and sample standard deviation (n-1) across runs.
EnsembleStats ensemble_stats(const std::vector<ErrorReport>& reports);

}  // namespace ron::metrics
