#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace natmed {

// splitmix64 step; used to derive well-separated child seeds from a user seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic uniform/Bernoulli/Normal draws on top of mt19937_64.  The
// standard distributions are implementation-defined, so we draw from raw
// 53-bit uniforms to keep datasets bit-reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // uniform on [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; two uniforms per call, no cached spare.
  double normal(double mean, double sd) {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    return mean + sd * z;
  }

  int binomial2(double p) { return static_cast<int>(bernoulli(p)) + static_cast<int>(bernoulli(p)); }

  std::uint64_t next_u64() { return gen_(); }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

// Independent stream for worker `stream` under master seed `seed`; results of
// a replicated run are thereby independent of thread scheduling.
inline Rng child_rng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s = a ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  std::uint64_t b = splitmix64(s);
  return Rng(b);
}

}  // namespace natmed
