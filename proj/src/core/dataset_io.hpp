#pragma once

// RON1 dataset container: 4-byte magic "RON1", 8-byte little-endian header
// length, UTF-8 JSON header, then packed little-endian float64 arrays in
// order p_l[N_s], x[N_p], rho[N_s*N_p], u[N_s*N_p], p[N_s*N_p] (row-major
// by sample).

#include <string>

#include <json.hpp>

#include "riemann.hpp"

namespace ron::io {

using Json = nlohmann::ordered_json;

// provenance (run config, input hashes) is embedded verbatim in the header.
void save_dataset(const riemann::Dataset& ds, const std::string& path,
                  const Json& provenance = Json::object());

riemann::Dataset load_dataset(const std::string& path);

// Header JSON without reading the bulk arrays.
Json dataset_info(const std::string& path);
Json dataset_info(const riemann::Dataset& ds);

}  // namespace ron::io
