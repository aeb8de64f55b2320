#pragma once

// RONW model container: 4-byte magic "RONW", 8-byte little-endian header
// length, UTF-8 JSON header, then packed little-endian float64 blobs in
// declaration order. The header's "blobs" section records names and shapes.

#include <string>
#include <vector>

#include <json.hpp>

#include "tensor.hpp"

namespace ron::io {

using Json = nlohmann::ordered_json;

struct Blob {
  std::string name;
  ad::Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  Json header;
  std::vector<Blob> blobs;

  const Blob& find(const std::string& name) const;
  bool has(const std::string& name) const;
};

void save_checkpoint(const std::string& path, Json header, const std::vector<Blob>& blobs);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ron::io
