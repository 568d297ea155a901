#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

namespace rlcm {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

inline double log_sum_exp(const double* x, std::size_t n) {
  double mx = neg_inf;
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x[i]);
  if (mx == neg_inf) return neg_inf;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - mx);
  return mx + std::log(s);
}

inline double log_sum_exp(const std::vector<double>& x) {
  return log_sum_exp(x.data(), x.size());
}

inline double log_add_exp(double a, double b) {
  if (a == neg_inf) return b;
  if (b == neg_inf) return a;
  double mx = std::max(a, b);
  return mx + std::log1p(std::exp(std::min(a, b) - mx));
}

// log of the ascending factorial x^(n) = x(x+1)...(x+n-1); 1 for n=0.
inline double log_ascending(double x, long n) {
  if (n == 0) return 0.0;
  return std::lgamma(x + static_cast<double>(n)) - std::lgamma(x);
}

// log of the descending factorial k_(t) = k(k-1)...(k-t+1); -inf when k < t.
inline double log_descending(long k, long t) {
  if (t == 0) return 0.0;
  if (k < t) return neg_inf;
  return std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(k - t) + 1.0);
}

// Normalizes log weights in place into probabilities; returns the log normalizer.
inline double normalize_log_weights(std::vector<double>& w) {
  double lse = log_sum_exp(w);
  for (auto& v : w) v = std::exp(v - lse);
  return lse;
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }
inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

inline double log_beta_pdf(double x, double a, double b) {
  if (!(x > 0.0 && x < 1.0)) return neg_inf;
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta_fn(a, b);
}

// FNV-1a over bytes; used for config fingerprints and named substreams.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace rlcm
