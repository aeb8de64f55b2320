// ron: command-line front end for shock-tube datasets, operator training,
// inference, and basis analysis. Links the C API only.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>
#include <vector>

#include "riemannonet/ron.h"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

int exit_code(ron_status s) {
  switch (s) {
    case RON_OK: return 0;
    case RON_ERR_CONFIG: return 2;
    case RON_ERR_NUMERIC: return 3;
    case RON_ERR_THRESHOLD: return 4;
    case RON_ERR_IO: return 2;
  }
  return 2;
}

[[noreturn]] void die(ron_status s) {
  std::cerr << "error: " << ron_last_error() << "\n";
  std::exit(exit_code(s));
}

void check(ron_status s) {
  if (s != RON_OK) die(s);
}

std::string take_string(char* s) {
  std::string out = s ? s : "";
  ron_string_free(s);
  return out;
}

int thread_cap() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("RON_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) return cap;
  }
  return hw;
}

// flat "key = value" file with [section] headers; later keys win
std::map<std::string, std::string> parse_config_file(const std::string& path,
                                                     const std::string& section) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open config file " << path << "\n";
    std::exit(2);
  }
  std::map<std::string, std::string> out;
  std::string line, current;
  while (std::getline(in, line)) {
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      current = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    if (current.empty() || current == section)
      out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::string file_hash(const std::string& path) {
  char* hex = nullptr;
  check(ron_file_blob_hash(path.c_str(), &hex));
  return take_string(hex);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    std::cerr << "error: cannot write " << path << "\n";
    std::exit(2);
  }
  out << text;
}

// minimal self-contained SVG line plot
void write_svg(const std::string& path, const std::vector<double>& x,
               const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  const int w = 720, h = 480, m = 48;
  double xmin = x.front(), xmax = x.back(), ymin = 1e300, ymax = -1e300;
  for (const auto& [name, ys] : series)
    for (double v : ys) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  if (ymax <= ymin) ymax = ymin + 1.0;
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  int ci = 0;
  for (const auto& [name, ys] : series) {
    svg << "<polyline fill='none' stroke='" << colors[ci % 4]
        << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double px = m + (x[i] - xmin) / (xmax - xmin) * (w - 2 * m);
      const double py = h - m - (ys[i] - ymin) / (ymax - ymin) * (h - 2 * m);
      svg << px << "," << py << " ";
    }
    svg << "'/>\n";
    svg << "<text x='" << m + 8 << "' y='" << m + 16 + 16 * ci << "' fill='" << colors[ci % 4]
        << "' font-size='13'>" << name << "</text>\n";
    ++ci;
  }
  svg << "</svg>\n";
  write_text(path, svg.str());
}

struct TrainFlags {
  std::string data_path;
  std::string out_dir = ".";
  std::string config_path;
  int ensemble = 1;
  std::uint64_t seed = 0;
  int width = -1;
  int hidden_layers = -1;
  int latent_dim = -1;
  std::string activation;
  std::string method;
  int steps = -1;
  int trunk_steps = -1;
  int branch_steps = -1;
  double lr = -1;
  double weight_decay = -1;
  bool log_fields = false;
  bool pseudo_inverse = false;
  std::string channels;
  int groups = -1;
  int kernel = -1;
  int n_ref = -1;
  int cond_features = -1;
  bool rho_only = false;
  int batch = -1;
  double check_total_below = -1;
};

Json resolve_train_config(const TrainFlags& f) {
  Json cfg = Json::object();
  if (!f.config_path.empty()) {
    for (const auto& [k, v] : parse_config_file(f.config_path, "train")) {
      try {
        cfg[k] = Json::parse(v);
      } catch (...) {
        cfg[k] = v;
      }
    }
  }
  auto set_if = [&](const char* key, auto value, auto unset) {
    if (value != unset) cfg[key] = value;
  };
  set_if("width", f.width, -1);
  set_if("hidden_layers", f.hidden_layers, -1);
  set_if("latent_dim", f.latent_dim, -1);
  if (!f.activation.empty()) cfg["activation"] = f.activation;
  if (!f.method.empty()) cfg["method"] = f.method;
  set_if("steps", f.steps, -1);
  set_if("trunk_steps", f.trunk_steps, -1);
  set_if("branch_steps", f.branch_steps, -1);
  set_if("lr", f.lr, -1.0);
  set_if("weight_decay", f.weight_decay, -1.0);
  if (f.log_fields) cfg["log_fields"] = true;
  if (f.pseudo_inverse) cfg["pseudo_inverse"] = true;
  if (!f.channels.empty()) {
    std::vector<int> ch;
    std::stringstream ss(f.channels);
    std::string tok;
    while (std::getline(ss, tok, ',')) ch.push_back(std::stoi(tok));
    cfg["channels"] = ch;
  }
  set_if("groups", f.groups, -1);
  set_if("kernel", f.kernel, -1);
  set_if("n_ref", f.n_ref, -1);
  set_if("cond_features", f.cond_features, -1);
  if (f.rho_only) cfg["rho_only"] = true;
  set_if("batch", f.batch, -1);
  return cfg;
}

int cmd_train(const std::string& kind, const TrainFlags& f) {
  Json cfg = resolve_train_config(f);

  ron_dataset* ds = nullptr;
  check(ron_dataset_load(f.data_path.c_str(), &ds));
  fs::create_directories(f.out_dir);

  Json provenance;
  provenance["command"] = "train";
  provenance["model"] = kind;
  provenance["config"] = cfg;
  provenance["ensemble"] = f.ensemble;
  provenance["base_seed"] = f.seed;
  provenance["inputs"] = {{f.data_path, file_hash(f.data_path)}};

  char* info_raw = nullptr;
  check(ron_dataset_info(ds, &info_raw));
  const Json ds_info = Json::parse(take_string(info_raw));
  const std::string label = ds_info.value("case_label", "data");

  struct Member {
    ron_model* model = nullptr;
    Json report;
    double seconds = 0;
    ron_status status = RON_OK;
  };
  std::vector<Member> members(f.ensemble);

  const int workers = std::min(thread_cap(), f.ensemble);
  std::atomic<int> next{0};
  auto trainer = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= f.ensemble) return;
      Json mcfg = cfg;
      mcfg["seed"] = f.seed + static_cast<std::uint64_t>(i);
      const auto t0 = std::chrono::steady_clock::now();
      ron_model* model = nullptr;
      ron_status st = ron_train(ds, kind.c_str(), mcfg.dump().c_str(), &model);
      members[i].status = st;
      if (st != RON_OK) continue;
      members[i].model = model;
      members[i].seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      char* rep = nullptr;
      if (ron_model_evaluate(model, ds, "test", -1, &rep) == RON_OK)
        members[i].report = Json::parse(take_string(rep));
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(trainer);
  for (auto& t : pool) t.join();

  for (const auto& m : members)
    if (m.status != RON_OK) die(m.status);

  Json reports = Json::array();
  Json timing = Json::array();
  for (int i = 0; i < f.ensemble; ++i) {
    const std::string stem = label + "_" + kind + "_seed" + std::to_string(f.seed + i);
    const std::string ckpt = (fs::path(f.out_dir) / (stem + ".ronw")).string();
    Json prov_i = provenance;
    prov_i["member_seed"] = f.seed + static_cast<std::uint64_t>(i);
    check(ron_model_save(members[i].model, ckpt.c_str(), prov_i.dump().c_str()));
    Json rep = members[i].report;
    rep["checkpoint"] = stem + ".ronw";
    rep["seed"] = f.seed + static_cast<std::uint64_t>(i);
    write_text((fs::path(f.out_dir) / (stem + ".report.json")).string(),
               Json({{"report", rep}, {"provenance", prov_i}}).dump(2) + "\n");
    reports.push_back(rep);
    timing.push_back({{"seed", f.seed + static_cast<std::uint64_t>(i)},
                      {"train_seconds", members[i].seconds}});
    std::printf("member seed=%llu test total L2 = %.4f%% (rho %.4f%%, u %.4f%%, p %.4f%%)\n",
                static_cast<unsigned long long>(f.seed + i), rep.value("total_pct", 0.0),
                rep.value("l2_rho_pct", 0.0), rep.value("l2_u_pct", 0.0),
                rep.value("l2_p_pct", 0.0));
  }

  double mean_total = 0;
  if (f.ensemble >= 2) {
    char* stats_raw = nullptr;
    check(ron_ensemble_stats(reports.dump().c_str(), &stats_raw));
    Json stats = Json::parse(take_string(stats_raw));
    mean_total = stats["total_pct"]["mean"].get<double>();
    Json agg = {{"stats", stats}, {"reports", reports}, {"provenance", provenance}};
    write_text((fs::path(f.out_dir) / (label + "_" + kind + "_ensemble_report.json")).string(),
               agg.dump(2) + "\n");
    std::printf("ensemble mean total L2 = %.4f%% +- %.4f%% over %d runs\n", mean_total,
                stats["total_pct"]["std"].get<double>(), f.ensemble);
  } else {
    mean_total = reports[0].value("total_pct", 0.0);
  }
  // wall-clock lives in a sidecar so report files stay bit-reproducible
  write_text((fs::path(f.out_dir) / (label + "_" + kind + "_timing.json")).string(),
             timing.dump(2) + "\n");

  for (auto& m : members) ron_model_free(m.model);
  ron_dataset_free(ds);

  if (f.check_total_below > 0 && mean_total >= f.check_total_below) {
    std::cerr << "error: total L2 " << mean_total << "% is not below the required "
              << f.check_total_below << "%\n";
    return 4;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shock-tube operator networks: datasets, training, inference, analysis"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate an exact-solution dataset (RON1)");
  std::string gen_case = "lpr", gen_out = "dataset.ron1", gen_config;
  int gen_samples = 500, gen_points = 200, gen_train = 400;
  std::uint64_t gen_seed = 0;
  bool gen_force = false;
  gen->add_option("--case", gen_case, "lpr|ipr|hpr|lpr-fig5|ipr-fig5")->capture_default_str();
  gen->add_option("-o,--out", gen_out, "output path")->capture_default_str();
  gen->add_option("--n-samples", gen_samples)->capture_default_str();
  gen->add_option("--n-points", gen_points)->capture_default_str();
  gen->add_option("--n-train", gen_train)->capture_default_str();
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--config", gen_config, "key=value config file ([gen-data] section)");
  gen->add_flag("--force", gen_force, "overwrite an existing file");

  auto* train = app.add_subcommand("train", "train an operator network");
  std::string train_kind;
  TrainFlags tf;
  train->add_option("model", train_kind, "deeponet-1step|deeponet-2step|unet")->required();
  train->add_option("--data", tf.data_path, "RON1 dataset path")->required();
  train->add_option("--out-dir", tf.out_dir)->capture_default_str();
  train->add_option("--config", tf.config_path, "key=value config file ([train] section)");
  train->add_option("--ensemble", tf.ensemble, "number of seeded members")
      ->capture_default_str();
  train->add_option("--seed", tf.seed, "base seed; member i uses seed+i")
      ->capture_default_str();
  train->add_option("--width", tf.width);
  train->add_option("--hidden-layers", tf.hidden_layers);
  train->add_option("--latent-dim", tf.latent_dim, "trunk output width K (default: width)");
  train->add_option("--activation", tf.activation, "tanh|rowdy-tanh|rowdy-cos");
  train->add_option("--method", tf.method, "qr|svd");
  train->add_option("--steps", tf.steps, "one-step / unet training steps");
  train->add_option("--trunk-steps", tf.trunk_steps);
  train->add_option("--branch-steps", tf.branch_steps);
  train->add_option("--lr", tf.lr);
  train->add_option("--weight-decay", tf.weight_decay);
  train->add_flag("--log-fields", tf.log_fields, "train on log(rho), log(p)");
  train->add_flag("--pseudo-inverse", tf.pseudo_inverse, "rank-deficient trunk fallback");
  train->add_option("--channels", tf.channels, "unet channels, e.g. 32,64,128,256");
  train->add_option("--groups", tf.groups);
  train->add_option("--kernel", tf.kernel);
  train->add_option("--n-ref", tf.n_ref);
  train->add_option("--cond-features", tf.cond_features);
  train->add_flag("--rho-only", tf.rho_only, "unet on the density field only");
  train->add_option("--batch", tf.batch, "unet minibatch size");
  train->add_option("--check-total-below", tf.check_total_below,
                    "exit 4 unless mean test total L2 is below this percent");

  auto* infer = app.add_subcommand("infer", "run a trained model and emit CSV trajectories");
  std::string inf_model, inf_pl, inf_pl_file, inf_out = ".", inf_data;
  int inf_truncate = -1;
  bool inf_svg = false;
  infer->add_option("--model", inf_model, "RONW checkpoint")->required();
  infer->add_option("--pl", inf_pl, "comma-separated left pressures");
  infer->add_option("--pl-file", inf_pl_file, "file with one p_l per line");
  infer->add_option("--truncate", inf_truncate, "use only the first m SVD modes");
  infer->add_option("--out-dir", inf_out)->capture_default_str();
  infer->add_option("--data", inf_data, "dataset for an error report on these pressures");
  infer->add_flag("--svg", inf_svg, "also write a line-plot SVG per pressure");

  auto* analyze = app.add_subcommand("analyze", "spectra, modes, coefficients, truncation");
  std::string an_model, an_data, an_which, an_methods = "svd", an_out = ".";
  std::vector<int> an_range;
  int an_max_modes = 16;
  analyze->add_option("--model", an_model)->required();
  analyze->add_option("--data", an_data, "dataset (needed for branch-coeffs and truncate)");
  analyze
      ->add_option("--which", an_which, "spectra|layers|branch-coeffs|unet-latent|truncate")
      ->required();
  analyze->add_option("--method", an_methods, "comma list for spectra: qr,svd")
      ->capture_default_str();
  analyze->add_option("--range", an_range, "truncation range: m_lo m_hi")->expected(2);
  analyze->add_option("--max-modes", an_max_modes)->capture_default_str();
  analyze->add_option("--out-dir", an_out)->capture_default_str();

  auto* dsinfo = app.add_subcommand("dataset-info", "print the RON1 header as JSON");
  std::string info_path;
  dsinfo->add_option("path", info_path)->required();

  CLI11_PARSE(app, argc, argv);

  if (*gen) {
    if (!gen_config.empty()) {
      auto kv = parse_config_file(gen_config, "gen-data");
      if (kv.count("case")) gen_case = kv["case"];
      if (kv.count("n_samples")) gen_samples = std::stoi(kv["n_samples"]);
      if (kv.count("n_points")) gen_points = std::stoi(kv["n_points"]);
      if (kv.count("n_train")) gen_train = std::stoi(kv["n_train"]);
      if (kv.count("seed")) gen_seed = std::stoull(kv["seed"]);
    }
    if (fs::exists(gen_out) && !gen_force) {
      std::cerr << "error: " << gen_out << " exists (use --force to overwrite)\n";
      return 2;
    }
    Json opts = {{"n_samples", gen_samples},
                 {"n_points", gen_points},
                 {"n_train", gen_train},
                 {"seed", gen_seed}};
    ron_dataset* ds = nullptr;
    check(ron_dataset_generate(gen_case.c_str(), opts.dump().c_str(), &ds));
    Json provenance = {{"command", "gen-data"}, {"case", gen_case}, {"config", opts}};
    check(ron_dataset_save(ds, gen_out.c_str(), provenance.dump().c_str()));
    std::vector<double> pl(ron_dataset_n_samples(ds));
    check(ron_dataset_copy_field(ds, RON_FIELD_PL, pl.data(), pl.size()));
    std::printf("wrote %s: %d samples x %d points, p_l in [%g, %g]\n", gen_out.c_str(),
                ron_dataset_n_samples(ds), ron_dataset_n_points(ds), pl.front(), pl.back());
    if (gen_case == "hpr") std::printf("note: extreme-ratio case; train with --log-fields\n");
    ron_dataset_free(ds);
    return 0;
  }

  if (*train) return cmd_train(train_kind, tf);

  if (*infer) {
    std::vector<double> pls;
    if (!inf_pl.empty()) {
      std::stringstream ss(inf_pl);
      std::string tok;
      while (std::getline(ss, tok, ',')) pls.push_back(std::stod(tok));
    }
    if (!inf_pl_file.empty()) {
      std::ifstream in(inf_pl_file);
      if (!in) {
        std::cerr << "error: cannot open " << inf_pl_file << "\n";
        return 2;
      }
      double v;
      while (in >> v) pls.push_back(v);
    }
    if (pls.empty()) {
      std::cerr << "error: no pressures given (use --pl or --pl-file)\n";
      return 2;
    }
    ron_model* model = nullptr;
    check(ron_model_load(inf_model.c_str(), &model));
    const int np = ron_model_n_points(model);
    const int nf = ron_model_n_fields(model);
    std::vector<double> grid(np);
    check(ron_model_grid(model, grid.data(), grid.size()));
    std::vector<double> fields(pls.size() * np * nf);
    check(ron_model_infer(model, pls.data(), static_cast<int>(pls.size()), inf_truncate,
                          fields.data(), fields.size()));
    fs::create_directories(inf_out);
    for (std::size_t s = 0; s < pls.size(); ++s) {
      char name[64];
      std::snprintf(name, sizeof name, "traj_%04zu.csv", s);
      std::ostringstream csv;
      csv << (nf == 3 ? "x,rho,u,p\n" : "x,rho\n");
      char buf[128];
      for (int j = 0; j < np; ++j) {
        csv << grid[j];
        for (int v = 0; v < nf; ++v) {
          std::snprintf(buf, sizeof buf, ",%.17g", fields[(s * np + j) * nf + v]);
          csv << buf;
        }
        csv << "\n";
      }
      write_text((fs::path(inf_out) / name).string(), csv.str());
      if (inf_svg && nf == 3) {
        std::vector<double> rho(np), u(np), p(np);
        for (int j = 0; j < np; ++j) {
          rho[j] = fields[(s * np + j) * 3];
          u[j] = fields[(s * np + j) * 3 + 1];
          p[j] = fields[(s * np + j) * 3 + 2];
        }
        std::snprintf(name, sizeof name, "traj_%04zu.svg", s);
        write_svg((fs::path(inf_out) / name).string(), grid,
                  {{"rho", rho}, {"u", u}, {"p", p}});
      }
    }
    std::printf("wrote %zu trajectories to %s\n", pls.size(), inf_out.c_str());

    if (!inf_data.empty()) {
      ron_dataset* ds = nullptr;
      check(ron_dataset_load(inf_data.c_str(), &ds));
      const int ns = ron_dataset_n_samples(ds);
      const int dnp = ron_dataset_n_points(ds);
      if (dnp != np || nf != 3) {
        std::cerr << "error: dataset grid does not match the model\n";
        return 2;
      }
      std::vector<double> all_pl(ns), rho(static_cast<size_t>(ns) * np),
          u(static_cast<size_t>(ns) * np), p(static_cast<size_t>(ns) * np);
      check(ron_dataset_copy_field(ds, RON_FIELD_PL, all_pl.data(), all_pl.size()));
      check(ron_dataset_copy_field(ds, RON_FIELD_RHO, rho.data(), rho.size()));
      check(ron_dataset_copy_field(ds, RON_FIELD_U, u.data(), u.size()));
      check(ron_dataset_copy_field(ds, RON_FIELD_P, p.data(), p.size()));
      char* dsi = nullptr;
      check(ron_dataset_info(ds, &dsi));
      const bool logged = Json::parse(take_string(dsi)).value("log_transformed", false);
      std::vector<double> exact(pls.size() * np * 3);
      bool all_found = true;
      for (std::size_t s = 0; s < pls.size() && all_found; ++s) {
        int found = -1;
        for (int i = 0; i < ns; ++i) {
          if (std::abs(all_pl[i] - pls[s]) <= 1e-12 * std::max(1.0, std::abs(pls[s]))) {
            found = i;
            break;
          }
        }
        if (found < 0) {
          all_found = false;
          break;
        }
        for (int j = 0; j < np; ++j) {
          const double r = rho[static_cast<size_t>(found) * np + j];
          const double pp = p[static_cast<size_t>(found) * np + j];
          exact[(s * np + j) * 3 + 0] = logged ? std::exp(r) : r;
          exact[(s * np + j) * 3 + 1] = u[static_cast<size_t>(found) * np + j];
          exact[(s * np + j) * 3 + 2] = logged ? std::exp(pp) : pp;
        }
      }
      if (all_found) {
        char* rep_raw = nullptr;
        check(ron_relative_l2(fields.data(), exact.data(), static_cast<int>(pls.size()), np,
                              &rep_raw));
        const std::string rep = take_string(rep_raw);
        write_text((fs::path(inf_out) / "report.json").string(), rep + "\n");
        std::printf("report: %s\n", rep.c_str());
      } else {
        std::printf("note: some pressures are not dataset samples; no report written\n");
      }
      ron_dataset_free(ds);
    }
    ron_model_free(model);
    return 0;
  }

  if (*analyze) {
    ron_model* model = nullptr;
    check(ron_model_load(an_model.c_str(), &model));
    ron_dataset* ds = nullptr;
    if (!an_data.empty()) check(ron_dataset_load(an_data.c_str(), &ds));
    Json opts;
    {
      std::vector<std::string> methods;
      std::stringstream ss(an_methods);
      std::string tok;
      while (std::getline(ss, tok, ',')) methods.push_back(tok);
      opts["methods"] = methods;
    }
    if (!an_range.empty()) {
      opts["m_lo"] = an_range[0];
      opts["m_hi"] = an_range[1];
    }
    opts["max_modes"] = an_max_modes;
    char* summary_raw = nullptr;
    ron_status st = ron_model_analyze(model, ds, an_which.c_str(), opts.dump().c_str(),
                                      an_out.c_str(), &summary_raw);
    if (st != RON_OK) die(st);
    const std::string summary = take_string(summary_raw);
    write_text((fs::path(an_out) / ("analysis_" + an_which + "_summary.json")).string(),
               summary + "\n");
    std::printf("%s\n", summary.c_str());
    if (ds) ron_dataset_free(ds);
    ron_model_free(model);
    return 0;
  }

  if (*dsinfo) {
    ron_dataset* ds = nullptr;
    check(ron_dataset_load(info_path.c_str(), &ds));
    char* j = nullptr;
    check(ron_dataset_info(ds, &j));
    std::printf("%s\n", take_string(j).c_str());
    ron_dataset_free(ds);
    return 0;
  }
  return 0;
}
