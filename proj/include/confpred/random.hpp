#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace confpred {

// splitmix64 finalizer; used to derive independent seed streams.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

//! Seed for stream `stream`, element `index`, derived from a master seed.
//!
//! Every consumer of randomness (repetition k of an experiment, the split
//! tuner, Monte-Carlo volume, ...) gets its own (stream, index) pair, so
//! results never depend on scheduling or worker count.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index) {
  return mix64(mix64(master ^ mix64(stream)) + index);
}

// Fixed stream ids used across the library.
namespace seed_stream {
inline constexpr std::uint64_t repetition = 1;
inline constexpr std::uint64_t split_tuner = 2;
inline constexpr std::uint64_t mc_volume = 3;
inline constexpr std::uint64_t oracle_cutoff = 4;
inline constexpr std::uint64_t auto_bounds = 5;
inline constexpr std::uint64_t region_mass = 6;
}  // namespace seed_stream

//! Deterministic RNG with explicit distributions.
//!
//! std::normal_distribution and friends are implementation-defined, so the
//! few samplers we need are spelled out here; output is identical on every
//! platform for a given seed.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform on [0, 1)
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // uniform on (0, 1]; safe as a log argument
  double uniform01_pos() {
    return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // standard normal via Box-Muller, second value cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01_pos();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // uniform index in [0, bound); bound > 0
  std::size_t index(std::size_t bound) {
    return static_cast<std::size_t>(eng_() % bound);
  }

private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

//! In-place Fisher-Yates shuffle (std::shuffle is implementation-defined).
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.index(i)]);
  }
}

}  // namespace confpred
