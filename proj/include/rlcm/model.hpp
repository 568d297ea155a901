#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "rlcm/bits.hpp"
#include "rlcm/errors.hpp"
#include "rlcm/mathutil.hpp"

namespace rlcm {

enum class Rule { dino, dina };

inline Rule rule_from_string(const std::string& s) {
  if (s == "dino") return Rule::dino;
  if (s == "dina") return Rule::dina;
  throw ConfigError("unknown rule: " + s + " (expected dino or dina)");
}

inline const char* rule_name(Rule r) { return r == Rule::dino ? "dino" : "dina"; }

// Largest state block the enumeration routines will expand (2^cap patterns).
inline constexpr std::size_t default_block_cap = 20;

// Ideal-response row for one latent state vector eta over all features.
// dino: feature fires if any required state is active (a feature nobody
// loads on never fires). dina: feature fires only if every loading state
// is active (a feature nobody loads on always fires).
inline void gamma_row_into(const Bit* eta, const BinaryMatrix& Q, Rule rule, Bit* out) {
  const std::size_t M = Q.rows(), L = Q.cols();
  if (rule == Rule::dino) {
    std::fill(out, out + L, Bit{0});
    for (std::size_t m = 0; m < M; ++m) {
      if (!eta[m]) continue;
      const Bit* qr = Q.row(m);
      for (std::size_t l = 0; l < L; ++l) out[l] |= qr[l];
    }
  } else {
    std::fill(out, out + L, Bit{1});
    for (std::size_t m = 0; m < M; ++m) {
      if (eta[m]) continue;
      const Bit* qr = Q.row(m);
      for (std::size_t l = 0; l < L; ++l)
        if (qr[l]) out[l] = 0;
    }
  }
}

inline BinaryMatrix build_gamma(const BinaryMatrix& H, const BinaryMatrix& Q, Rule rule) {
  if (H.cols() != Q.rows())
    throw DataError("state dimension mismatch between latent states and machine matrix");
  BinaryMatrix g(H.rows(), Q.cols());
  for (std::size_t j = 0; j < H.rows(); ++j) gamma_row_into(H.row(j), Q, rule, g.row(j));
  return g;
}

inline BinaryMatrix build_gamma_dino(const BinaryMatrix& H, const BinaryMatrix& Q) {
  return build_gamma(H, Q, Rule::dino);
}

inline BinaryMatrix build_gamma_dina(const BinaryMatrix& H, const BinaryMatrix& Q) {
  return build_gamma(H, Q, Rule::dina);
}

struct RateParams {
  std::vector<double> theta;  // true positive rate per feature
  std::vector<double> psi;    // false positive rate per feature

  void validate() const {
    if (theta.size() != psi.size())
      throw DataError("rate vectors have different lengths");
    for (std::size_t l = 0; l < theta.size(); ++l) {
      if (!(0.0 < psi[l] && psi[l] < theta[l] && theta[l] < 1.0))
        throw DataError("rates must satisfy 0 < psi < theta < 1 at every feature");
    }
  }

  static RateParams constant(std::size_t L, double theta_v, double psi_v) {
    RateParams r;
    r.theta.assign(L, theta_v);
    r.psi.assign(L, psi_v);
    return r;
  }
};

inline double response_prob(Bit gamma_entry, double theta_l, double psi_l) {
  if (!(psi_l < theta_l))
    throw DataError("response_prob: true positive rate must exceed false positive rate");
  return gamma_entry ? theta_l : psi_l;
}

// Per-cluster sufficient statistics: subject count and per-feature count of ones.
struct ClusterCounts {
  std::int64_t size = 0;
  std::vector<std::int64_t> n1;

  ClusterCounts() = default;
  explicit ClusterCounts(std::size_t n_features) : n1(n_features, 0) {}

  std::size_t n_features() const { return n1.size(); }
  std::int64_t n0(std::size_t l) const { return size - n1[l]; }

  void add_row(const Bit* y) {
    ++size;
    for (std::size_t l = 0; l < n1.size(); ++l) n1[l] += y[l];
  }
  void remove_row(const Bit* y) {
    --size;
    for (std::size_t l = 0; l < n1.size(); ++l) n1[l] -= y[l];
  }
  void add(const ClusterCounts& o) {
    size += o.size;
    for (std::size_t l = 0; l < n1.size(); ++l) n1[l] += o.n1[l];
  }
  void subtract(const ClusterCounts& o) {
    size -= o.size;
    for (std::size_t l = 0; l < n1.size(); ++l) n1[l] -= o.n1[l];
  }

  static ClusterCounts from_rows(const BinaryMatrix& Y, const std::vector<int>& rows) {
    ClusterCounts c(Y.cols());
    for (int i : rows) c.add_row(Y.row(static_cast<std::size_t>(i)));
    return c;
  }

  friend bool operator==(const ClusterCounts& a, const ClusterCounts& b) {
    return a.size == b.size && a.n1 == b.n1;
  }
};

namespace detail {
// n * logv with the 0 * -inf corner pinned to 0.
inline double count_term(std::int64_t n, double logv) {
  return n == 0 ? 0.0 : static_cast<double>(n) * logv;
}
}  // namespace detail

// Log-likelihood of all subjects in a cluster given its latent state vector,
// computed from sufficient counts.
inline double cluster_loglik(const ClusterCounts& c, const Bit* eta_star,
                             const BinaryMatrix& Q, const RateParams& rates, Rule rule) {
  const std::size_t L = Q.cols();
  if (c.n_features() != L) throw DataError("cluster counts and machine matrix disagree on L");
  std::vector<Bit> g(L);
  gamma_row_into(eta_star, Q, rule, g.data());
  double out = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    double lam = g[l] ? rates.theta[l] : rates.psi[l];
    out += detail::count_term(c.n1[l], std::log(lam));
    out += detail::count_term(c.n0(l), std::log1p(-lam));
  }
  return out;
}

// Orthogonal row-blocks of Q: connected components of the row graph where two
// rows are adjacent when their supports share a feature. Features are
// attributed to the unique component loading them; unloaded features are
// listed separately.
struct StateBlocks {
  std::vector<std::vector<std::size_t>> states;
  std::vector<std::vector<std::size_t>> features;
  std::vector<std::size_t> zero_cols;
};

inline StateBlocks rcm_state_blocks(const BinaryMatrix& Q) {
  const std::size_t M = Q.rows(), L = Q.cols();
  std::vector<std::size_t> parent(M);
  for (std::size_t m = 0; m < M; ++m) parent[m] = m;
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (std::size_t l = 0; l < L; ++l) {
    std::size_t first = M;
    for (std::size_t m = 0; m < M; ++m) {
      if (!Q(m, l)) continue;
      if (first == M)
        first = m;
      else
        parent[find(first)] = find(m);
    }
  }
  StateBlocks out;
  std::vector<std::size_t> block_of(M, M);
  for (std::size_t m = 0; m < M; ++m) {
    std::size_t r = find(m);
    std::size_t idx;
    if (block_of[r] == M) {
      idx = out.states.size();
      block_of[r] = idx;
      out.states.emplace_back();
      out.features.emplace_back();
    } else {
      idx = block_of[r];
    }
    out.states[idx].push_back(m);
  }
  for (std::size_t l = 0; l < L; ++l) {
    std::size_t m = 0;
    while (m < M && !Q(m, l)) ++m;
    if (m == M)
      out.zero_cols.push_back(l);
    else
      out.features[block_of[find(m)]].push_back(l);
  }
  return out;
}

// Log-likelihood table over the 2^|block| activation patterns of one block.
// Entry a has bit k set when block_states[k] is active. Uses a subset-sum
// zeta transform so the cost is O(|F| + 2^m m) instead of O(2^m |F|).
inline std::vector<double> block_pattern_logliks(const std::vector<std::size_t>& block_states,
                                                 const std::vector<std::size_t>& block_features,
                                                 const ClusterCounts& c, const BinaryMatrix& Q,
                                                 const RateParams& rates, Rule rule,
                                                 std::size_t block_cap = default_block_cap) {
  const std::size_t mb = block_states.size();
  if (mb > block_cap)
    throw CapacityError("state block of size " + std::to_string(mb) +
                        " exceeds the enumeration cap " + std::to_string(block_cap) +
                        "; raise block_cap to proceed");
  const std::size_t P = std::size_t{1} << mb;
  std::vector<double> z(P, 0.0);
  double base = 0.0, dtot = 0.0;
  for (std::size_t l : block_features) {
    double a0 = detail::count_term(c.n1[l], std::log(rates.psi[l])) +
                detail::count_term(c.n0(l), std::log1p(-rates.psi[l]));
    double a1 = detail::count_term(c.n1[l], std::log(rates.theta[l])) +
                detail::count_term(c.n0(l), std::log1p(-rates.theta[l]));
    base += a0;
    double diff = a1 - a0;
    dtot += diff;
    std::size_t mask = 0;
    for (std::size_t k = 0; k < mb; ++k)
      if (Q(block_states[k], l)) mask |= std::size_t{1} << k;
    z[mask] += diff;
  }
  for (std::size_t k = 0; k < mb; ++k)
    for (std::size_t a = 0; a < P; ++a)
      if (a & (std::size_t{1} << k)) z[a] += z[a ^ (std::size_t{1} << k)];
  std::vector<double> w(P);
  if (rule == Rule::dina) {
    for (std::size_t a = 0; a < P; ++a) w[a] = base + z[a];
  } else {
    const std::size_t full = P - 1;
    for (std::size_t a = 0; a < P; ++a) w[a] = base + dtot - z[full & ~a];
  }
  return w;
}

// Log-prior table over the same patterns; p_m = 0 cleanly excludes a state.
inline std::vector<double> block_pattern_logpriors(const std::vector<std::size_t>& block_states,
                                                   const std::vector<double>& p) {
  const std::size_t mb = block_states.size();
  const std::size_t P = std::size_t{1} << mb;
  std::vector<double> w(P, 0.0);
  for (std::size_t k = 0; k < mb; ++k) {
    double pm = p[block_states[k]];
    double lp = std::log(pm);
    double lq = std::log1p(-pm);
    const std::size_t bit = std::size_t{1} << k;
    for (std::size_t a = 0; a < P; ++a) w[a] += (a & bit) ? lp : lq;
  }
  return w;
}

// Contribution of features no state loads on (constant in the latent state).
inline double zero_col_loglik(const std::vector<std::size_t>& zero_cols, const ClusterCounts& c,
                              const RateParams& rates, Rule rule) {
  double out = 0.0;
  for (std::size_t l : zero_cols) {
    double lam = rule == Rule::dino ? rates.psi[l] : rates.theta[l];
    out += detail::count_term(c.n1[l], std::log(lam));
    out += detail::count_term(c.n0(l), std::log1p(-lam));
  }
  return out;
}

// Marginal log-likelihood of a cluster with the latent state summed out,
// factorized over orthogonal row-blocks of Q.
inline double marginal_loglik_g(const ClusterCounts& c, const BinaryMatrix& Q,
                                const RateParams& rates, const std::vector<double>& p, Rule rule,
                                const StateBlocks& blocks,
                                std::size_t block_cap = default_block_cap) {
  double out = zero_col_loglik(blocks.zero_cols, c, rates, rule);
  for (std::size_t u = 0; u < blocks.states.size(); ++u) {
    if (blocks.features[u].empty()) continue;  // prior over those states sums to 1
    auto w = block_pattern_logliks(blocks.states[u], blocks.features[u], c, Q, rates, rule,
                                   block_cap);
    auto pr = block_pattern_logpriors(blocks.states[u], p);
    for (std::size_t a = 0; a < w.size(); ++a) w[a] += pr[a];
    out += log_sum_exp(w);
  }
  return out;
}

inline double marginal_loglik_g(const ClusterCounts& c, const BinaryMatrix& Q,
                                const RateParams& rates, const std::vector<double>& p, Rule rule,
                                std::size_t block_cap = default_block_cap) {
  return marginal_loglik_g(c, Q, rates, p, rule, rcm_state_blocks(Q), block_cap);
}

}  // namespace rlcm
