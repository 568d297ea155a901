#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "rlcm/errors.hpp"
#include "rlcm/mathutil.hpp"

namespace rlcm {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// xoshiro256** with all sampling routines hand-rolled so replays stay
// bit-exact regardless of standard-library distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  // Substream c of a master seed; used for chain/replication seeding.
  static Rng substream(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t sm = master;
    std::uint64_t mixed = splitmix64(sm) ^ (0xA0761D6478BD642Full * (stream + 1));
    return Rng(mixed);
  }

  std::uint64_t next_u64() {
    auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
    std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0,1) with 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1): rejects exact zeros so log() stays finite.
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) throw NumericError("uniform_below: empty range");
    std::uint64_t limit = ~0ull - (~0ull % n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    // polar Marsaglia, no cached second value (keeps stream accounting simple)
    while (true) {
      double u = 2.0 * uniform() - 1.0;
      double v = 2.0 * uniform() - 1.0;
      double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  // Marsaglia-Tsang for a >= 1; boost trick for a < 1.
  double gamma(double a) {
    if (a <= 0.0) throw NumericError("gamma: shape must be positive");
    if (a < 1.0) {
      double u = uniform_pos();
      return gamma(a + 1.0) * std::pow(u, 1.0 / a);
    }
    double d = a - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform_pos();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
  }

  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
  }

  // Index draw from unnormalized nonnegative weights.
  std::size_t categorical(const std::vector<double>& w) {
    double total = 0.0;
    for (double v : w) total += v;
    if (!(total > 0.0)) throw NumericError("categorical: weights sum to zero");
    double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
      acc += w[i];
      if (u < acc) return i;
    }
    return w.size() - 1;
  }

  // Index draw from log weights (normalized internally).
  std::size_t categorical_log(const std::vector<double>& logw);

 private:
  std::uint64_t s_[4];
};

inline std::size_t Rng::categorical_log(const std::vector<double>& logw) {
  double mx = neg_inf;
  for (double v : logw) mx = std::max(mx, v);
  if (mx == neg_inf) throw NumericError("categorical_log: all weights are -inf");
  double total = 0.0;
  for (double v : logw) total += std::exp(v - mx);
  double u = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < logw.size(); ++i) {
    acc += std::exp(logw[i] - mx);
    if (u < acc) return i;
  }
  return logw.size() - 1;
}

}  // namespace rlcm
