#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cnsdiff {

// All randomness in the project flows through this wrapper. The engine is
// std::mt19937_64 (fully specified by the standard) and the uniform/gaussian
// transforms are hand-rolled below, so a (seed, call sequence) pair produces
// the same bits on every platform. std::*_distribution is never used.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1). 53 random mantissa bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Multiply-shift bound, no modulo bias worth
  // caring about at the ranges used here (n << 2^64).
  uint64_t uniform_below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<__uint128_t>(engine_()) * n) >> 64);
  }

  // Standard normal via Box-Muller (cosine branch only; one draw per pair of
  // uniforms keeps the stream stateless and easy to reason about).
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named substreams derived from one master seed. Toggling a feature that
// consumes from one stream leaves the draws of every other stream untouched.
enum class RngStream : uint64_t {
  init = 1,
  shuffle = 2,
  sampler = 3,
  diffusion_noise = 4,
};

inline uint64_t stream_seed(uint64_t master, RngStream stream) {
  return splitmix64(master ^ (0xd1b54a32d192ed03ULL * static_cast<uint64_t>(stream)));
}

// Per-(epoch, batch) seed so batch items can be prepared independently.
inline uint64_t batch_seed(uint64_t master, RngStream stream, uint64_t epoch,
                           uint64_t batch_index) {
  uint64_t s = stream_seed(master, stream);
  s = splitmix64(s ^ (epoch * 0x9e3779b97f4a7c15ULL));
  return splitmix64(s ^ (batch_index * 0xc2b2ae3d27d4eb4fULL));
}

}  // namespace cnsdiff
