#include "checkpoint.hpp"

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

}  // namespace

const Blob& Checkpoint::find(const std::string& name) const {
  for (const auto& b : blobs)
    if (b.name == name) return b;
  fail_io("checkpoint: missing blob '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& b : blobs)
    if (b.name == name) return true;
  return false;
}

void save_checkpoint(const std::string& path, Json header, const std::vector<Blob>& blobs) {
  Json blob_index = Json::array();
  for (const auto& b : blobs) {
    if (ad::numel(b.shape) != static_cast<std::int64_t>(b.data.size()))
      fail_config("checkpoint blob '" + b.name + "': shape does not match data size");
    blob_index.push_back({{"name", b.name}, {"shape", b.shape}});
  }
  header["blobs"] = blob_index;
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_io("cannot open for writing: " + path);
  out.write("RONW", 4);
  write_u64_le(out, hs.size());
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& b : blobs) {
    out.write(reinterpret_cast<const char*>(b.data.data()),
              static_cast<std::streamsize>(b.data.size() * 8));
  }
  if (!out) fail_io("write failure: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "RONW", 4) != 0) fail_io("not a RONW file: " + path);
  const std::uint64_t hlen = read_u64_le(in);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) fail_io("RONW: truncated header");
  Checkpoint ck;
  ck.header = Json::parse(hs);
  for (const auto& meta : ck.header.at("blobs")) {
    Blob b;
    b.name = meta.at("name").get<std::string>();
    b.shape = meta.at("shape").get<ad::Shape>();
    b.data.resize(ad::numel(b.shape));
    in.read(reinterpret_cast<char*>(b.data.data()),
            static_cast<std::streamsize>(b.data.size() * 8));
    if (!in) fail_io("RONW: truncated blob '" + b.name + "'");
    ck.blobs.push_back(std::move(b));
  }
  return ck;
}

}  // namespace ron::io
