#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace dsg {

// Seed mixing and random streams are hand-rolled so that every draw is
// bit-reproducible across platforms and standard-library versions. The
// generator is splitmix64; streams are derived by hashing (seed, key...)
// tuples, which lets scenes/images be processed in any order.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t mix_u64(uint64_t a, uint64_t b) {
  uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  return splitmix64(s);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t bits_of(double x) {
  uint64_t u;
  std::memcpy(&u, &x, sizeof(u));
  return u;
}

// Named sub-stream keys so independent draws never alias.
enum class Stream : uint64_t {
  scene = 0x5c31,
  camera = 0xca3e,
  texture = 0x7e87,
  prompt = 0x9a01,
  light = 0x1197,
  diffusion = 0xd1ff,
  split = 0x59717,
};

class Rng {
 public:
  Rng() : state_(0x853c49e6748fea9bull) {}
  explicit Rng(uint64_t seed) : state_(splitmix64(seed)) {}

  static Rng from_stream(uint64_t master_seed, uint64_t id, Stream stream) {
    return Rng(mix_u64(mix_u64(master_seed, id), static_cast<uint64_t>(stream)));
  }

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); rejection sampling keeps it exactly uniform.
  uint64_t uniform_index(uint64_t n) {
    if (n <= 1) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  uint64_t state_;
};

}  // namespace dsg
