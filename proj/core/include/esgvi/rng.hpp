#pragma once

#include <cstdint>
#include <random>

namespace esgvi {

// splitmix64 step: advances `state` and returns the mixed output.
std::uint64_t splitmix64(std::uint64_t& state);

// Deterministic random stream: mt19937_64 driven through explicit bit-shift
// uniforms and Box-Muller normals, so draws are bit-identical across
// platforms, compilers, and thread counts (no std::distribution involved).
// Per-trial streams derive their seed from (seed, stream_id) with splitmix64,
// making each trial's draws independent of scheduling order.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  static RngStream for_trial(std::uint64_t seed, std::uint64_t stream_id);

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the second draw of each pair is cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace esgvi
