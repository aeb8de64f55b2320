#include "dataset_io.hpp"

#include <cstring>
#include <fstream>

namespace ron::io {

namespace {

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f64_array(std::ostream& out, const double* data, std::size_t n) {
  // assumes IEEE-754 little-endian host, asserted at build configuration
  static_assert(sizeof(double) == 8);
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
}

void read_f64_array(std::istream& in, double* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 8));
  if (!in) fail_io("RON1: truncated float payload");
}

Json setup_to_json(const riemann::RiemannSetup& s) {
  Json j;
  j["left"] = {{"rho", s.left.rho}, {"u", s.left.u}};
  j["right"] = {{"rho", s.right.rho}, {"u", s.right.u}, {"p", s.right.p}};
  j["x_c"] = s.x_c;
  j["x_lo"] = s.x_lo;
  j["x_hi"] = s.x_hi;
  j["t_f"] = s.t_f;
  j["gamma"] = s.gamma;
  j["n_points"] = s.n_points;
  return j;
}

riemann::RiemannSetup setup_from_json(const Json& j) {
  riemann::RiemannSetup s;
  s.left.rho = j.at("left").at("rho").get<double>();
  s.left.u = j.at("left").at("u").get<double>();
  s.left.p = 1.0;  // placeholder, overwritten per sample
  s.right.rho = j.at("right").at("rho").get<double>();
  s.right.u = j.at("right").at("u").get<double>();
  s.right.p = j.at("right").at("p").get<double>();
  s.x_c = j.at("x_c").get<double>();
  s.x_lo = j.at("x_lo").get<double>();
  s.x_hi = j.at("x_hi").get<double>();
  s.t_f = j.at("t_f").get<double>();
  s.gamma = j.at("gamma").get<double>();
  s.n_points = j.at("n_points").get<int>();
  return s;
}

}  // namespace

Json dataset_info(const riemann::Dataset& ds) {
  Json h;
  h["format"] = "RON1";
  h["case"] = riemann::case_to_string(ds.case_name);
  h["case_label"] = ds.case_label;
  h["setup"] = setup_to_json(ds.setup_template);
  h["n_samples"] = ds.n_samples();
  h["n_points"] = ds.n_points();
  h["p_l_lo"] = ds.p_l_lo;
  h["p_l_hi"] = ds.p_l_hi;
  h["train_indices"] = ds.train_indices;
  h["test_indices"] = ds.test_indices;
  h["log_transformed"] = ds.log_transformed;
  h["seed"] = ds.seed;
  return h;
}

void save_dataset(const riemann::Dataset& ds, const std::string& path, const Json& provenance) {
  Json h = dataset_info(ds);
  if (!provenance.empty()) h["provenance"] = provenance;
  const std::string header = h.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_io("cannot open for writing: " + path);
  out.write("RON1", 4);
  write_u64_le(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  const int ns = ds.n_samples();
  const int np = ds.n_points();
  std::vector<double> buf(ns);
  for (int s = 0; s < ns; ++s) buf[s] = ds.trajectories[s].p_l;
  write_f64_array(out, buf.data(), buf.size());
  write_f64_array(out, ds.trajectories.at(0).x.data(), np);
  for (auto field : {&riemann::Trajectory::rho, &riemann::Trajectory::u, &riemann::Trajectory::p}) {
    for (int s = 0; s < ns; ++s) {
      write_f64_array(out, (ds.trajectories[s].*field).data(), np);
    }
  }
  if (!out) fail_io("write failure: " + path);
}

riemann::Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open dataset: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "RON1", 4) != 0) fail_io("not a RON1 file: " + path);
  const std::uint64_t hlen = read_u64_le(in);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) fail_io("RON1: truncated header");
  Json h = Json::parse(header);

  riemann::Dataset ds;
  ds.case_name = riemann::case_from_string(h.at("case").get<std::string>());
  ds.case_label = h.value("case_label", "");
  ds.setup_template = setup_from_json(h.at("setup"));
  ds.p_l_lo = h.at("p_l_lo").get<double>();
  ds.p_l_hi = h.at("p_l_hi").get<double>();
  ds.train_indices = h.at("train_indices").get<std::vector<int>>();
  ds.test_indices = h.at("test_indices").get<std::vector<int>>();
  ds.log_transformed = h.at("log_transformed").get<bool>();
  ds.seed = h.at("seed").get<std::uint64_t>();

  const int ns = h.at("n_samples").get<int>();
  const int np = h.at("n_points").get<int>();
  std::vector<double> p_l(ns);
  read_f64_array(in, p_l.data(), ns);
  std::vector<double> x(np);
  read_f64_array(in, x.data(), np);
  ds.trajectories.resize(ns);
  for (int s = 0; s < ns; ++s) {
    ds.trajectories[s].p_l = p_l[s];
    ds.trajectories[s].x = x;
    ds.trajectories[s].rho.resize(np);
    ds.trajectories[s].u.resize(np);
    ds.trajectories[s].p.resize(np);
  }
  for (auto field : {&riemann::Trajectory::rho, &riemann::Trajectory::u, &riemann::Trajectory::p}) {
    for (int s = 0; s < ns; ++s) read_f64_array(in, (ds.trajectories[s].*field).data(), np);
  }
  return ds;
}

Json dataset_info(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open dataset: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "RON1", 4) != 0) fail_io("not a RON1 file: " + path);
  const std::uint64_t hlen = read_u64_le(in);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) fail_io("RON1: truncated header");
  return Json::parse(header);
}

}  // namespace ron::io
