#include "metrics.hpp"

#include <cmath>

namespace ron::metrics {

Json ErrorReport::to_json(bool include_per_sample) const {
  Json j;
  j["l2_rho_pct"] = l2_rho_pct;
  j["l2_u_pct"] = l2_u_pct;
  j["l2_p_pct"] = l2_p_pct;
  j["total_pct"] = total_pct;
  if (include_per_sample) {
    Json rows = Json::array();
    for (const auto& r : per_sample) rows.push_back({r[0], r[1], r[2]});
    j["per_sample_pct"] = rows;
  }
  return j;
}

ErrorReport relative_l2(const std::vector<double>& predicted, const std::vector<double>& exact,
                        int n_samples, int n_points) {
  const std::size_t expect = static_cast<std::size_t>(n_samples) * n_points * 3;
  if (predicted.size() != expect || exact.size() != expect)
    fail_config("relative_l2: field arrays must be [n_samples, n_points, 3]");
  ErrorReport rep;
  rep.per_sample.resize(n_samples);
  std::array<double, 3> acc{};
  for (int s = 0; s < n_samples; ++s) {
    for (int k = 0; k < 3; ++k) {
      double num = 0.0, den = 0.0;
      for (int j = 0; j < n_points; ++j) {
        const std::size_t idx = (static_cast<std::size_t>(s) * n_points + j) * 3 + k;
        const double d = predicted[idx] - exact[idx];
        num += d * d;
        den += exact[idx] * exact[idx];
      }
      if (den == 0.0)
        fail_numeric("relative_l2: zero-norm ground truth in sample " + std::to_string(s) +
                     " variable " + std::to_string(k));
      const double pct = 100.0 * std::sqrt(num) / std::sqrt(den);
      rep.per_sample[s][k] = pct;
      acc[k] += pct;
    }
  }
  rep.l2_rho_pct = acc[0] / n_samples;
  rep.l2_u_pct = acc[1] / n_samples;
  rep.l2_p_pct = acc[2] / n_samples;
  rep.total_pct = (rep.l2_rho_pct + rep.l2_u_pct + rep.l2_p_pct) / 3.0;
  return rep;
}

Json EnsembleStats::to_json() const {
  Json j;
  j["n_runs"] = n_runs;
  const char* names[4] = {"l2_rho_pct", "l2_u_pct", "l2_p_pct", "total_pct"};
  for (int k = 0; k < 4; ++k) {
    j[names[k]] = {{"mean", mean[k]}, {"std", stddev[k]}};
  }
  return j;
}

EnsembleStats ensemble_stats(const std::vector<ErrorReport>& reports) {
  if (reports.size() < 2) fail_config("ensemble_stats: need at least 2 reports");
  EnsembleStats st;
  st.n_runs = static_cast<int>(reports.size());
  auto column = [](const ErrorReport& r, int k) {
    switch (k) {
      case 0: return r.l2_rho_pct;
      case 1: return r.l2_u_pct;
      case 2: return r.l2_p_pct;
      default: return r.total_pct;
    }
  };
  for (int k = 0; k < 4; ++k) {
    double m = 0.0;
    for (const auto& r : reports) m += column(r, k);
    m /= st.n_runs;
    double var = 0.0;
    for (const auto& r : reports) {
      const double d = column(r, k) - m;
      var += d * d;
    }
    st.mean[k] = m;
    st.stddev[k] = std::sqrt(var / (st.n_runs - 1));
  }
  return st;
}

}  // namespace ron::metrics
