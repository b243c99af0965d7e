#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdrl {

// Error taxonomy, mapped to CLI exit codes by tools/mdrl_main.cpp.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct contract_error : std::logic_error {
  using std::logic_error::logic_error;
};
struct artifact_missing_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Order-sensitive combiner for deriving independent seed streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ull));
}

inline std::uint64_t hash_bytes(const void* data, std::size_t n,
                                std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return splitmix64(h);
}

inline std::uint64_t hash_string(const std::string& s, std::uint64_t seed = 0) {
  return hash_bytes(s.data(), s.size(), 0xcbf29ce484222325ull ^ seed);
}

// Content checksum of a parameter sub-range (address-free).
inline std::uint64_t checksum(const double* v, std::size_t n) {
  std::uint64_t h = 0x84222325cbf29ce4ull;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &v[i], sizeof bits);
    h = splitmix64(h ^ bits);
  }
  return h;
}

inline std::uint64_t checksum(const std::vector<double>& v) {
  return checksum(v.data(), v.size());
}

// All randomness in the workbench flows through explicitly seeded Rng
// instances; derived streams keep parallel work deterministic.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  Rng derive(std::uint64_t tag) {
    return Rng(mix_seed(gen_(), tag));
  }

  std::uint64_t next_u64() { return gen_(); }

  // uniform over [0, n)
  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_);
  }

  double uniform_real() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(gen_);
  }

  // uniform over [lo, hi]
  double uniform_range(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }

  bool bernoulli(double p) { return uniform_real() < p; }

  std::mt19937_64& raw() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace mdrl
