#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "lis/common.hpp"

namespace lis {

// One SplitMix64 step; used to derive decorrelated child seeds.
inline std::uint64_t splitmix64(std::uint64_t state) {
  std::uint64_t z = state + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seeded generator. Gaussians come from Box-Muller on mt19937_64 uniforms
// rather than std::normal_distribution, whose algorithm is
// implementation-defined; every stream here is a pure function of the seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  // uniform on (0,1), excludes both endpoints
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u = uniform();
    const double v = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u));
    const double angle = 2.0 * M_PI * v;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  Vec normal_vector(Eigen::Index n) {
    Vec out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = normal();
    return out;
  }

  // integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

  // Independent stream addressed by index; stable under call order, so
  // per-task streams survive any worker scheduling.
  Rng child(std::uint64_t index) const {
    return Rng(splitmix64(seed_ ^ (0x9e3779b97f4a7c15ULL * (index + 1))));
  }

  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace lis
