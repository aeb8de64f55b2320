// C API over the core: opaque handles, error codes, thread-local messages.

#include "riemannonet/ron.h"

#include <cstring>
#include <filesystem>
#include <string>
#include <variant>

#include "basis.hpp"
#include "checkpoint.hpp"
#include "dataset_io.hpp"
#include "deeponet.hpp"
#include "metrics.hpp"
#include "riemann.hpp"
#include "unet.hpp"

using ron::ErrKind;
using ron::Error;
using Json = nlohmann::ordered_json;

struct ron_dataset {
  ron::riemann::Dataset ds;
};

struct ron_model {
  std::variant<ron::deeponet::Model, ron::unet::Model> m;

  bool is_unet() const { return std::holds_alternative<ron::unet::Model>(m); }
  const ron::deeponet::Model& don() const { return std::get<ron::deeponet::Model>(m); }
  const ron::unet::Model& unet() const { return std::get<ron::unet::Model>(m); }
};

namespace {

thread_local std::string g_last_error;

ron_status status_of(const Error& e) {
  switch (e.kind()) {
    case ErrKind::Config: return RON_ERR_CONFIG;
    case ErrKind::Numeric: return RON_ERR_NUMERIC;
    case ErrKind::Threshold: return RON_ERR_THRESHOLD;
    case ErrKind::Io: return RON_ERR_IO;
  }
  return RON_ERR_CONFIG;
}

template <typename Fn>
ron_status guarded(Fn&& fn) {
  try {
    fn();
    return RON_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return RON_ERR_CONFIG;
  } catch (...) {
    g_last_error = "unknown error";
    return RON_ERR_CONFIG;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

Json parse_options(const char* json) {
  if (!json || !*json) return Json::object();
  return Json::parse(json);
}

std::vector<int> split_indices(const ron::riemann::Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train_indices;
  if (split == "test") return ds.test_indices;
  if (split == "all") {
    std::vector<int> all(ds.n_samples());
    for (int i = 0; i < ds.n_samples(); ++i) all[i] = i;
    return all;
  }
  ron::fail_config("unknown split: " + split + " (expected train|test|all)");
}

}  // namespace

extern "C" {

const char* ron_version(void) { return "0.1.0"; }

const char* ron_last_error(void) { return g_last_error.c_str(); }

void ron_string_free(char* s) { std::free(s); }

// ---- datasets ---------------------------------------------------------------

ron_status ron_dataset_generate(const char* case_label, const char* options_json,
                                ron_dataset** out) {
  return guarded([&] {
    if (!case_label || !out) ron::fail_config("null argument");
    Json opts = parse_options(options_json);
    auto spec = ron::riemann::case_spec(case_label);
    ron::riemann::GenerateOptions go;
    go.n_samples = opts.value("n_samples", 500);
    go.n_points = opts.value("n_points", 200);
    go.n_train = opts.value("n_train", go.n_samples * 4 / 5);
    go.seed = opts.value("seed", std::uint64_t{0});
    *out = new ron_dataset{ron::riemann::generate_dataset(spec, go)};
  });
}

ron_status ron_dataset_load(const char* path, ron_dataset** out) {
  return guarded([&] {
    if (!path || !out) ron::fail_config("null argument");
    *out = new ron_dataset{ron::io::load_dataset(path)};
  });
}

ron_status ron_dataset_save(const ron_dataset* ds, const char* path,
                            const char* provenance_json) {
  return guarded([&] {
    if (!ds || !path) ron::fail_config("null argument");
    ron::io::save_dataset(ds->ds, path, parse_options(provenance_json));
  });
}

ron_status ron_dataset_info(const ron_dataset* ds, char** json_out) {
  return guarded([&] {
    if (!ds || !json_out) ron::fail_config("null argument");
    *json_out = dup_string(ron::io::dataset_info(ds->ds).dump());
  });
}

ron_status ron_dataset_log_transform(const ron_dataset* ds, int inverse, ron_dataset** out) {
  return guarded([&] {
    if (!ds || !out) ron::fail_config("null argument");
    *out = new ron_dataset{inverse ? ron::riemann::inverse_log_transform(ds->ds)
                                   : ron::riemann::log_transform(ds->ds)};
  });
}

void ron_dataset_free(ron_dataset* ds) { delete ds; }

int ron_dataset_n_samples(const ron_dataset* ds) { return ds ? ds->ds.n_samples() : 0; }
int ron_dataset_n_points(const ron_dataset* ds) { return ds ? ds->ds.n_points() : 0; }

ron_status ron_dataset_copy_field(const ron_dataset* ds, ron_field field, double* buf,
                                  size_t buf_len) {
  return guarded([&] {
    if (!ds || !buf) ron::fail_config("null argument");
    const auto& d = ds->ds;
    const std::size_t ns = d.n_samples(), np = d.n_points();
    auto need = [&](std::size_t n) {
      if (buf_len < n)
        ron::fail_config("buffer too small: need " + std::to_string(n) + " doubles");
    };
    switch (field) {
      case RON_FIELD_PL:
        need(ns);
        for (std::size_t s = 0; s < ns; ++s) buf[s] = d.trajectories[s].p_l;
        break;
      case RON_FIELD_X:
        need(np);
        std::memcpy(buf, d.trajectories.at(0).x.data(), np * sizeof(double));
        break;
      case RON_FIELD_RHO:
      case RON_FIELD_U:
      case RON_FIELD_P: {
        need(ns * np);
        for (std::size_t s = 0; s < ns; ++s) {
          const auto& t = d.trajectories[s];
          const std::vector<double>& src =
              field == RON_FIELD_RHO ? t.rho : (field == RON_FIELD_U ? t.u : t.p);
          std::memcpy(buf + s * np, src.data(), np * sizeof(double));
        }
        break;
      }
      default: ron::fail_config("unknown field id");
    }
  });
}

// ---- training / models ---------------------------------------------------------

namespace {

ron::deeponet::TrainOptions deeponet_options(const Json& cfg) {
  ron::deeponet::TrainOptions o;
  o.width = cfg.value("width", o.width);
  o.hidden_layers = cfg.value("hidden_layers", o.hidden_layers);
  o.latent_dim = cfg.value("latent_dim", o.latent_dim);
  if (cfg.contains("activation"))
    o.activation = ron::nn::activation_from_string(cfg["activation"].get<std::string>());
  if (cfg.contains("method"))
    o.method = ron::deeponet::method_from_string(cfg["method"].get<std::string>());
  o.steps = cfg.value("steps", o.steps);
  o.trunk_steps = cfg.value("trunk_steps", o.trunk_steps);
  o.branch_steps = cfg.value("branch_steps", o.branch_steps);
  o.lr = cfg.value("lr", o.lr);
  o.weight_decay = cfg.value("weight_decay", o.weight_decay);
  o.clamp_eps = cfg.value("clamp_eps", o.clamp_eps);
  o.log_fields = cfg.value("log_fields", false);
  o.pseudo_inverse = cfg.value("pseudo_inverse", false);
  o.seed = cfg.value("seed", std::uint64_t{0});
  return o;
}

ron::unet::TrainOptions unet_options(const Json& cfg) {
  ron::unet::TrainOptions o;
  if (cfg.contains("channels")) o.spec.channels = cfg["channels"].get<std::vector<int>>();
  o.spec.groups = cfg.value("groups", o.spec.groups);
  o.spec.kernel = cfg.value("kernel", o.spec.kernel);
  o.spec.n_ref = cfg.value("n_ref", o.spec.n_ref);
  o.spec.cond_features = cfg.value("cond_features", o.spec.cond_features);
  o.spec.rho_only = cfg.value("rho_only", false);
  o.steps = cfg.value("steps", o.steps);
  o.batch = cfg.value("batch", o.batch);
  o.lr = cfg.value("lr", o.lr);
  o.clamp_eps = cfg.value("clamp_eps", o.clamp_eps);
  o.log_fields = cfg.value("log_fields", false);
  o.seed = cfg.value("seed", std::uint64_t{0});
  return o;
}

}  // namespace

ron_status ron_train(const ron_dataset* ds, const char* kind, const char* config_json,
                     ron_model** out) {
  return guarded([&] {
    if (!ds || !kind || !out) ron::fail_config("null argument");
    const std::string k = kind;
    Json cfg = parse_options(config_json);
    if (k == "deeponet-1step") {
      auto r = ron::deeponet::train_one_step(ds->ds, deeponet_options(cfg));
      *out = new ron_model{std::move(r.model)};
    } else if (k == "deeponet-2step") {
      auto r = ron::deeponet::train_two_step(ds->ds, deeponet_options(cfg));
      *out = new ron_model{std::move(r.model)};
    } else if (k == "unet") {
      auto r = ron::unet::train_unet(ds->ds, unet_options(cfg));
      *out = new ron_model{std::move(r.model)};
    } else {
      ron::fail_config("unknown model kind: " + k +
                       " (expected deeponet-1step|deeponet-2step|unet)");
    }
  });
}

ron_status ron_model_load(const char* path, ron_model** out) {
  return guarded([&] {
    if (!path || !out) ron::fail_config("null argument");
    ron::io::Checkpoint ck = ron::io::load_checkpoint(path);
    const std::string kind = ck.header.at("kind").get<std::string>();
    if (kind == "unet") {
      *out = new ron_model{ron::unet::load_model(path)};
    } else {
      *out = new ron_model{ron::deeponet::load_model(path)};
    }
  });
}

ron_status ron_model_save(const ron_model* m, const char* path, const char* provenance_json) {
  return guarded([&] {
    if (!m || !path) ron::fail_config("null argument");
    Json prov = parse_options(provenance_json);
    if (m->is_unet()) {
      ron::unet::save_model(m->unet(), path, prov);
    } else {
      ron::deeponet::save_model(m->don(), path, prov);
    }
  });
}

ron_status ron_model_info(const ron_model* m, char** json_out) {
  return guarded([&] {
    if (!m || !json_out) ron::fail_config("null argument");
    Json j;
    if (m->is_unet()) {
      const auto& u = m->unet();
      j["kind"] = "unet";
      j["case_label"] = u.case_label;
      j["n_points"] = static_cast<int>(u.grid_x.size());
      j["n_fields"] = u.n_fields;
      j["channels"] = u.spec.channels;
      j["n_ref"] = u.spec.n_ref;
      j["ref_indices"] = u.ref_indices;
      j["seed"] = u.seed;
      j["steps"] = u.steps_taken;
      j["log_fields"] = u.norm.log_fields;
    } else {
      const auto& d = m->don();
      j["kind"] = d.kind;
      j["case_label"] = d.case_label;
      j["n_points"] = static_cast<int>(d.grid_x.size());
      j["n_fields"] = ron::deeponet::Model::kVars;
      j["latent_dim"] = d.latent_dim;
      if (d.artifacts) j["method"] = ron::deeponet::method_to_string(d.artifacts->method);
      j["seed"] = d.seed;
      j["steps"] = d.steps_taken;
      j["log_fields"] = d.norm.log_fields;
    }
    *json_out = dup_string(j.dump());
  });
}

void ron_model_free(ron_model* m) { delete m; }

int ron_model_n_points(const ron_model* m) {
  if (!m) return 0;
  return m->is_unet() ? static_cast<int>(m->unet().grid_x.size())
                      : static_cast<int>(m->don().grid_x.size());
}

int ron_model_n_fields(const ron_model* m) {
  if (!m) return 0;
  return m->is_unet() ? m->unet().n_fields : ron::deeponet::Model::kVars;
}

ron_status ron_model_grid(const ron_model* m, double* buf, size_t buf_len) {
  return guarded([&] {
    if (!m || !buf) ron::fail_config("null argument");
    const auto& grid = m->is_unet() ? m->unet().grid_x : m->don().grid_x;
    if (buf_len < grid.size()) ron::fail_config("buffer too small for grid");
    std::memcpy(buf, grid.data(), grid.size() * sizeof(double));
  });
}

ron_status ron_model_infer(const ron_model* m, const double* p_l, int n, int truncate_to,
                           double* out, size_t out_len) {
  return guarded([&] {
    if (!m || !p_l || !out || n < 1) ron::fail_config("null or empty argument");
    std::vector<double> pl(p_l, p_l + n);
    std::vector<double> fields;
    if (m->is_unet()) {
      if (truncate_to >= 0) ron::fail_config("infer: basis truncation needs a two-step model");
      fields = m->unet().infer(pl);
    } else {
      fields = m->don().infer(pl, truncate_to);
    }
    if (out_len < fields.size())
      ron::fail_config("output buffer too small: need " + std::to_string(fields.size()));
    std::memcpy(out, fields.data(), fields.size() * sizeof(double));
  });
}

ron_status ron_model_evaluate(const ron_model* m, const ron_dataset* ds, const char* split,
                              int truncate_to, char** json_out) {
  return guarded([&] {
    if (!m || !ds || !split || !json_out) ron::fail_config("null argument");
    const std::vector<int> idx = split_indices(ds->ds, split);
    ron::metrics::ErrorReport rep;
    if (m->is_unet()) {
      if (truncate_to >= 0) ron::fail_config("evaluate: truncation needs a two-step model");
      rep = m->unet().evaluate(ds->ds, idx);
    } else {
      rep = m->don().evaluate(ds->ds, idx, truncate_to);
    }
    Json j = rep.to_json();
    j["split"] = split;
    j["n_samples"] = static_cast<int>(idx.size());
    *json_out = dup_string(j.dump());
  });
}

// ---- analysis ----------------------------------------------------------------

namespace {

std::string case_prefix(const ron_model* m) {
  const std::string label = m->is_unet() ? m->unet().case_label : m->don().case_label;
  return label.empty() ? "model" : label;
}

Json analyze_impl(const ron_model* m, const ron_dataset* ds, const std::string& which,
                  const Json& opts, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string prefix = case_prefix(m);
  const int max_modes = opts.value("max_modes", 16);
  Json summary;
  summary["analysis"] = which;
  summary["case"] = prefix;
  Json files = Json::array();
  auto emit = [&](const std::string& name) {
    files.push_back(name);
    return (fs::path(out_dir) / name).string();
  };

  if (which == "spectra") {
    if (m->is_unet()) ron::fail_config("analyze spectra: needs a deeponet model");
    std::vector<std::string> methods = {"svd"};
    if (opts.contains("methods")) methods = opts["methods"].get<std::vector<std::string>>();
    for (const auto& ms : methods) {
      auto method = ron::deeponet::method_from_string(ms);
      auto [spec, modes] = ron::basis::trunk_spectrum_and_modes(m->don(), method);
      const std::string tag = method == ron::deeponet::FactorizeMethod::QR ? "qr" : "svd";
      ron::basis::write_spectrum_csv(emit(prefix + "_spectrum_" + tag + ".csv"), spec);
      ron::basis::write_modes_csv(emit(prefix + "_modes_" + tag + ".csv"), modes, max_modes);
      summary[tag] = {{"first", spec.values.front()},
                      {"last", spec.values.back()},
                      {"last_over_first", spec.values.back() / spec.values.front()}};
    }
  } else if (which == "layers") {
    if (m->is_unet()) ron::fail_config("analyze layers: needs a deeponet model");
    auto spectra = ron::basis::layerwise_spectra(m->don());
    Json lens = Json::array();
    for (std::size_t l = 0; l < spectra.size(); ++l) {
      ron::basis::write_spectrum_csv(
          emit(prefix + "_layerspectrum" + std::to_string(l + 1) + "_svd.csv"), spectra[l]);
      lens.push_back(static_cast<int>(spectra[l].values.size()));
    }
    summary["layer_widths"] = lens;
  } else if (which == "branch-coeffs") {
    if (m->is_unet() || !m->don().artifacts)
      ron::fail_config("analyze branch-coeffs: needs a two-step deeponet model");
    if (!ds) ron::fail_config("analyze branch-coeffs: needs a dataset");
    const std::string tag = ron::deeponet::method_to_string(m->don().artifacts->method);
    for (const char* split : {"train", "test"}) {
      auto coeffs =
          ron::basis::branch_coefficients(m->don(), ds->ds, split_indices(ds->ds, split));
      ron::basis::write_branch_coeffs_csv(
          emit(prefix + "_branchcoeffs-" + split + "_" + tag + ".csv"), coeffs);
      summary[std::string("argmax_mode_") + split] = {{"rho", coeffs.argmax_mode[0]},
                                                      {"u", coeffs.argmax_mode[1]},
                                                      {"p", coeffs.argmax_mode[2]}};
    }
  } else if (which == "unet-latent") {
    if (!m->is_unet()) ron::fail_config("analyze unet-latent: needs a unet model");
    auto levels = ron::basis::unet_latent_svd(m->unet());
    Json decay = Json::array();
    for (std::size_t p = 0; p < levels.size(); ++p) {
      const std::string lvl = "L" + std::to_string(p + 1);
      ron::basis::write_spectrum_csv(emit(prefix + "_unetlatent-" + lvl + "_svd.csv"),
                                     levels[p].spectrum);
      ron::basis::write_latent_modes_csv(emit(prefix + "_unetlatentmodes-" + lvl + "_svd.csv"),
                                         levels[p], max_modes);
      decay.push_back(levels[p].decay_index(0.01));
    }
    summary["decay_index_1pct"] = decay;
  } else if (which == "truncate") {
    if (m->is_unet() || !m->don().artifacts)
      ron::fail_config("analyze truncate: needs a two-step deeponet model");
    if (!ds) ron::fail_config("analyze truncate: needs a dataset");
    const int k = m->don().latent_dim;
    const int m_lo = opts.value("m_lo", std::max(1, k / 2));
    const int m_hi = opts.value("m_hi", k);
    auto curve = ron::basis::optimal_truncation(m->don(), ds->ds, m_lo, m_hi);
    ron::basis::write_truncation_csv(emit(prefix + "_truncation_svd.csv"), curve);
    summary["argmin_m"] = curve.argmin_m;
    summary["at_argmin"] = {{"rho", curve.at_argmin[0]},
                            {"u", curve.at_argmin[1]},
                            {"p", curve.at_argmin[2]},
                            {"total", curve.at_argmin[3]}};
    summary["at_full"] = {{"rho", curve.at_full[0]},
                          {"u", curve.at_full[1]},
                          {"p", curve.at_full[2]},
                          {"total", curve.at_full[3]}};
  } else {
    ron::fail_config("unknown analysis: " + which +
                     " (expected spectra|layers|branch-coeffs|unet-latent|truncate)");
  }
  summary["files"] = files;
  summary["out_dir"] = out_dir;
  return summary;
}

}  // namespace

ron_status ron_model_analyze(const ron_model* m, const ron_dataset* ds, const char* which,
                             const char* options_json, const char* out_dir,
                             char** summary_json_out) {
  return guarded([&] {
    if (!m || !which || !out_dir) ron::fail_config("null argument");
    Json summary = analyze_impl(m, ds, which, parse_options(options_json), out_dir);
    if (summary_json_out) *summary_json_out = dup_string(summary.dump());
  });
}

// ---- metrics --------------------------------------------------------------------

ron_status ron_relative_l2(const double* predicted, const double* exact, int n_samples,
                           int n_points, char** json_out) {
  return guarded([&] {
    if (!predicted || !exact || !json_out) ron::fail_config("null argument");
    const std::size_t n = static_cast<std::size_t>(n_samples) * n_points * 3;
    std::vector<double> d(predicted, predicted + n), g(exact, exact + n);
    auto rep = ron::metrics::relative_l2(d, g, n_samples, n_points);
    *json_out = dup_string(rep.to_json().dump());
  });
}

ron_status ron_file_blob_hash(const char* path, char** hex_out) {
  return guarded([&] {
    if (!path || !hex_out) ron::fail_config("null argument");
    *hex_out = dup_string(ron::git_blob_sha1_file(path));
  });
}

ron_status ron_ensemble_stats(const char* reports_json_array, char** json_out) {
  return guarded([&] {
    if (!reports_json_array || !json_out) ron::fail_config("null argument");
    Json arr = Json::parse(reports_json_array);
    std::vector<ron::metrics::ErrorReport> reports;
    for (const auto& j : arr) {
      ron::metrics::ErrorReport r;
      r.l2_rho_pct = j.at("l2_rho_pct").get<double>();
      r.l2_u_pct = j.at("l2_u_pct").get<double>();
      r.l2_p_pct = j.at("l2_p_pct").get<double>();
      r.total_pct = j.at("total_pct").get<double>();
      reports.push_back(r);
    }
    auto st = ron::metrics::ensemble_stats(reports);
    *json_out = dup_string(st.to_json().dump());
  });
}

}  // extern "C"
