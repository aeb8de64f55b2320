#pragma once

// Shared plumbing: error types, deterministic RNG, thread cap, content hashing.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ron {

enum class ErrKind { Config, Numeric, Io, Threshold };

class Error : public std::runtime_error {
 public:
  Error(ErrKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrKind kind() const { return kind_; }

 private:
  ErrKind kind_;
};

[[noreturn]] inline void fail_config(const std::string& msg) { throw Error(ErrKind::Config, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw Error(ErrKind::Numeric, msg); }
[[noreturn]] inline void fail_io(const std::string& msg) { throw Error(ErrKind::Io, msg); }

// Deterministic RNG. splitmix64 core with manual double conversion so streams
// are bit-identical across platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1) with 53-bit resolution
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // uniform integer in [0, n)
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // derive an independent stream (member i of an ensemble, etc.)
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    Rng r(seed ^ (0x517cc1b727220a95ull * (stream + 1)));
    return r.next_u64();
  }

 private:
  std::uint64_t state_;
};

// Seeded Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

// Thread cap: min(RON_THREADS, hardware_concurrency), at least 1.
int thread_cap();

// Run fn(i) for i in [0, n). Output ordering is the caller's responsibility;
// tasks must not share mutable state.
void parallel_for(int n, const std::function<void(int)>& fn, int max_threads = 0);

// Git-style blob hash: sha1("blob <len>\0" + bytes), hex encoded.
std::string git_blob_sha1(const void* data, std::size_t len);
std::string git_blob_sha1_file(const std::string& path);

}  // namespace ron
