#include "esgvi/rng.hpp"

#include <cmath>

namespace esgvi {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RngStream RngStream::for_trial(std::uint64_t seed, std::uint64_t stream_id) {
  std::uint64_t state = seed;
  (void)splitmix64(state);  // decouple from the raw seed value
  state ^= 0xD1B54A32D192ED03ULL * (stream_id + 1);
  return RngStream(splitmix64(state));
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);  // keep log finite
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

}  // namespace esgvi
