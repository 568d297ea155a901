#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "rlcm/errors.hpp"
#include "rlcm/mathutil.hpp"
#include "rlcm/model.hpp"
#include "rlcm/rng.hpp"

namespace rlcm {

enum class PkFamily { geometric, poisson1 };

inline PkFamily pk_family_from_string(const std::string& s) {
  if (s == "geometric") return PkFamily::geometric;
  if (s == "poisson1") return PkFamily::poisson1;
  throw ConfigError("unknown pk_family: " + s + " (expected geometric or poisson1)");
}

inline const char* pk_family_name(PkFamily f) {
  return f == PkFamily::geometric ? "geometric" : "poisson1";
}

// Partition prior: mixture over the number of components with Dirichlet
// symmetry parameter gamma, yielding an exchangeable partition law with
// coefficients V_N(t). V values are cached; copies share the cache.
class PartitionPrior {
 public:
  PartitionPrior(double gamma, PkFamily family, double param)
      : gamma_(gamma), family_(family), param_(param), cache_(new Cache) {
    if (!(gamma > 0.0)) throw ConfigError("partition prior: gamma must be positive");
    if (family == PkFamily::geometric && !(param > 0.0 && param < 1.0))
      throw ConfigError("partition prior: geometric success parameter must lie in (0,1)");
    if (family == PkFamily::poisson1 && !(param > 0.0))
      throw ConfigError("partition prior: poisson rate must be positive");
  }

  double gamma() const { return gamma_; }

  // log p_K(k), k = 1, 2, ...
  double log_pk(long k) const {
    if (k < 1) return neg_inf;
    if (family_ == PkFamily::geometric)
      return static_cast<double>(k - 1) * std::log1p(-param_) + std::log(param_);
    return -param_ + static_cast<double>(k - 1) * std::log(param_) -
           std::lgamma(static_cast<double>(k));
  }

  // log V_N(t) = log sum_{k>=t} k_(t) / (gamma k)^(N) p_K(k).
  double log_Vn(long t, long N) const {
    if (t < 1 || t > N) throw DataError("log_Vn: t must lie in 1..N");
    const auto key = std::make_pair(N, t);
    {
      std::lock_guard<std::mutex> lk(cache_->mu);
      auto it = cache_->table.find(key);
      if (it != cache_->table.end()) return it->second;
    }
    double acc = neg_inf;
    double best = neg_inf;
    for (long k = t;; ++k) {
      double term = log_descending(k, t) - log_ascending(gamma_ * k, N) + log_pk(k);
      acc = log_add_exp(acc, term);
      best = std::max(best, term);
      if (k > N && term < best - 40.0) break;
      if (k - t > 200000)
        throw NumericError("log_Vn: series tail failed to converge");
    }
    std::lock_guard<std::mutex> lk(cache_->mu);
    cache_->table.emplace(key, acc);
    return acc;
  }

  // log prior probability of a partition given by its block sizes.
  double log_eppf(const std::vector<long>& block_sizes) const {
    long N = 0;
    for (long b : block_sizes) {
      if (b < 1) throw DataError("log_eppf: blocks must be nonempty");
      N += b;
    }
    double out = log_Vn(static_cast<long>(block_sizes.size()), N);
    for (long b : block_sizes) out += log_ascending(gamma_, b);
    return out;
  }

 private:
  struct Cache {
    std::mutex mu;
    std::map<std::pair<long, long>, double> table;
  };
  double gamma_;
  PkFamily family_;
  double param_;
  std::shared_ptr<Cache> cache_;
};

// Sequential seating draw from the partition prior: customer n joins an
// existing block with weight |block| + gamma or opens a new one with weight
// gamma V_n(t+1)/V_n(t). Returns block labels in order of first appearance.
inline std::vector<int> sample_partition_urn(long N, const PartitionPrior& prior, Rng& rng) {
  std::vector<int> z(static_cast<std::size_t>(N), 0);
  std::vector<double> sizes;
  if (N == 0) return z;
  sizes.push_back(1.0);
  for (long i = 1; i < N; ++i) {
    const long n = i + 1;
    const long t = static_cast<long>(sizes.size());
    std::vector<double> w(sizes.size() + 1);
    for (std::size_t c = 0; c < sizes.size(); ++c) w[c] = sizes[c] + prior.gamma();
    w[sizes.size()] =
        (t < n) ? prior.gamma() * std::exp(prior.log_Vn(t + 1, n) - prior.log_Vn(t, n)) : 0.0;
    std::size_t pick = rng.categorical(w);
    if (pick == sizes.size())
      sizes.push_back(1.0);
    else
      sizes[pick] += 1.0;
    z[static_cast<std::size_t>(i)] = static_cast<int>(pick);
  }
  return z;
}

// Marginal log-prior of the latent state matrix with per-state activation
// probabilities integrated out under Beta(alpha1*alpha2/M, alpha2).
inline double log_prior_Hstar(const BinaryMatrix& Hstar, double alpha1, double alpha2) {
  const std::size_t T = Hstar.rows(), M = Hstar.cols();
  if (M == 0) return 0.0;
  const double a = alpha1 * alpha2 / static_cast<double>(M);
  const double b = alpha2;
  double out = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    double s = static_cast<double>(Hstar.col_sum(m));
    out += log_beta_fn(s + a, static_cast<double>(T) - s + b) - log_beta_fn(a, b);
  }
  return out;
}

// Number of columns equal to the m-th unit vector, for every m.
inline std::vector<std::size_t> singleton_col_counts(const BinaryMatrix& Q) {
  const std::size_t M = Q.rows(), L = Q.cols();
  std::vector<std::size_t> c(M, 0);
  for (std::size_t l = 0; l < L; ++l) {
    std::size_t ones = 0, who = 0;
    for (std::size_t m = 0; m < M; ++m) {
      if (Q(m, l)) {
        ++ones;
        who = m;
      }
    }
    if (ones == 1) ++c[who];
  }
  return c;
}

// Block condition: two disjoint identity blocks can be extracted, i.e. at
// least two singleton columns per state (and enough columns to hold them).
inline bool check_C1(const BinaryMatrix& Q) {
  if (2 * Q.rows() > Q.cols()) return false;
  for (std::size_t c : singleton_col_counts(Q))
    if (c < 2) return false;
  return true;
}

// Support condition: every state loads on at least three features.
inline bool check_C3(const BinaryMatrix& Q) {
  for (std::size_t m = 0; m < Q.rows(); ++m)
    if (Q.row_sum(m) < 3) return false;
  return true;
}

// Membership in the sampling constraint set: [I; I; Qtilde] up to row/column
// permutation with every row of Qtilde nonempty. Counting argument: two
// spare singleton columns per state plus a residual support of at least one,
// i.e. row sums >= 3.
inline bool q_in_constraint_set(const BinaryMatrix& Q) {
  return check_C1(Q) && check_C3(Q);
}

// Separation condition over the saturated pattern lattice: ideal responses
// restricted to non-identity columns must differ across every comparable
// pair of distinct patterns. The rules here are monotone in the pattern, so
// agreement anywhere along a chain forces agreement on a covering pair;
// checking covering pairs is exhaustive.
inline bool check_C2(const BinaryMatrix& Q, Rule rule) {
  const std::size_t M = Q.rows(), L = Q.cols();
  if (M > 12)
    throw CapacityError("pattern-lattice check requires at most 12 states");
  if (!check_C1(Q))
    throw DataError("pattern-lattice check needs the two-identity block structure");
  std::vector<std::size_t> need(M, 2);
  std::vector<char> is_identity_col(L, 0);
  for (std::size_t l = 0; l < L; ++l) {
    std::size_t ones = 0, who = 0;
    for (std::size_t m = 0; m < M; ++m) {
      if (Q(m, l)) {
        ++ones;
        who = m;
      }
    }
    if (ones == 1 && need[who] > 0) {
      --need[who];
      is_identity_col[l] = 1;
    }
  }
  std::vector<std::size_t> tilde_cols;
  for (std::size_t l = 0; l < L; ++l)
    if (!is_identity_col[l]) tilde_cols.push_back(l);
  const std::size_t P = std::size_t{1} << M;
  const std::size_t W = tilde_cols.size();
  std::vector<Bit> table(P * W);
  std::vector<Bit> eta(M), full(L);
  for (std::size_t a = 0; a < P; ++a) {
    for (std::size_t m = 0; m < M; ++m) eta[m] = (a >> m) & 1u;
    gamma_row_into(eta.data(), Q, rule, full.data());
    for (std::size_t w = 0; w < W; ++w) table[a * W + w] = full[tilde_cols[w]];
  }
  for (std::size_t a = 0; a < P; ++a) {
    for (std::size_t m = 0; m < M; ++m) {
      if (!((a >> m) & 1u)) continue;
      const std::size_t b = a ^ (std::size_t{1} << m);
      bool differ = false;
      for (std::size_t w = 0; w < W; ++w) {
        if (table[a * W + w] != table[b * W + w]) {
          differ = true;
          break;
        }
      }
      if (!differ) return false;
    }
  }
  return true;
}

// Inverse-CDF draw from Beta(a, b) restricted to (lower, upper).
inline double sample_truncated_beta(double a, double b, double lower, double upper, Rng& rng) {
  if (!(0.0 <= lower && lower < upper && upper <= 1.0))
    throw NumericError("sample_truncated_beta: invalid interval");
  double flo = lower <= 0.0 ? 0.0 : boost::math::ibeta(a, b, lower);
  double fhi = upper >= 1.0 ? 1.0 : boost::math::ibeta(a, b, upper);
  double mass = fhi - flo;
  if (!(mass > 1e-14))
    throw NumericError("sample_truncated_beta: interval mass below 1e-14");
  double u = flo + mass * rng.uniform();
  double x = boost::math::ibeta_inv(a, b, u);
  if (x <= lower) x = std::nextafter(lower, 1.0);
  if (x >= upper) x = std::nextafter(upper, 0.0);
  return x;
}

// Rate prior settings, broadcast per feature, with optional hard bounds.
struct RatePrior {
  std::vector<double> a_theta, b_theta, a_psi, b_psi;
  double theta_lower = 0.0;  // additional lower bound on every theta
  double psi_upper = 1.0;    // additional upper bound on every psi

  static RatePrior broadcast(std::size_t L, double at, double bt, double ap, double bp,
                             double theta_lower = 0.0, double psi_upper = 1.0) {
    RatePrior r;
    r.a_theta.assign(L, at);
    r.b_theta.assign(L, bt);
    r.a_psi.assign(L, ap);
    r.b_psi.assign(L, bp);
    r.theta_lower = theta_lower;
    r.psi_upper = psi_upper;
    return r;
  }
};

// Log joint density (unnormalized) of data and all sampled quantities:
// complete-data likelihood, partition prior, integrated state prior, rate
// priors with the ordering restriction, and the alpha1 hyperprior mapped
// through beta = alpha1/(1+alpha1) (change-of-variables factor included).
inline double joint_logpost(const BinaryMatrix& Y, const std::vector<int>& Z,
                            const BinaryMatrix& Hstar, const BinaryMatrix& Q,
                            const RateParams& rates, double alpha1,
                            const PartitionPrior& partition, double alpha2,
                            const RatePrior& rate_prior, double a_beta, double b_beta, Rule rule,
                            bool strict_q = false) {
  const std::size_t T = Hstar.rows();
  if (strict_q && !q_in_constraint_set(Q))
    throw DataError("machine matrix outside the constraint set");
  std::vector<long> sizes(T, 0);
  std::vector<ClusterCounts> counts(T, ClusterCounts(Y.cols()));
  for (std::size_t i = 0; i < Y.rows(); ++i) {
    int j = Z[i];
    if (j < 0 || static_cast<std::size_t>(j) >= T)
      throw DataError("cluster label out of range");
    ++sizes[static_cast<std::size_t>(j)];
    counts[static_cast<std::size_t>(j)].add_row(Y.row(i));
  }
  for (long s : sizes)
    if (s == 0) throw DataError("empty cluster in labeling");
  double out = partition.log_eppf(sizes);
  for (std::size_t j = 0; j < T; ++j)
    out += cluster_loglik(counts[j], Hstar.row(j), Q, rates, rule);
  out += log_prior_Hstar(Hstar, alpha1, alpha2);
  for (std::size_t l = 0; l < Y.cols(); ++l) {
    double th = rates.theta[l], ps = rates.psi[l];
    if (!(ps < th) || th < rate_prior.theta_lower || ps > rate_prior.psi_upper) return neg_inf;
    out += log_beta_pdf(th, rate_prior.a_theta[l], rate_prior.b_theta[l]);
    out += log_beta_pdf(ps, rate_prior.a_psi[l], rate_prior.b_psi[l]);
  }
  double beta = alpha1 / (1.0 + alpha1);
  out += log_beta_pdf(beta, a_beta, b_beta) - 2.0 * std::log1p(alpha1);
  return out;
}

}  // namespace rlcm
