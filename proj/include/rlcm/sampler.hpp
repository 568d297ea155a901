#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rlcm/bits.hpp"
#include "rlcm/errors.hpp"
#include "rlcm/mathutil.hpp"
#include "rlcm/model.hpp"
#include "rlcm/priors.hpp"
#include "rlcm/rng.hpp"

namespace rlcm {

enum class SamplerMode { finite, infinite };

inline SamplerMode mode_from_string(const std::string& s) {
  if (s == "finite") return SamplerMode::finite;
  if (s == "infinite") return SamplerMode::infinite;
  throw ConfigError("unknown sampler mode: " + s);
}

inline const char* mode_name(SamplerMode m) {
  return m == SamplerMode::finite ? "finite" : "infinite";
}

struct SamplerConfig {
  long iterations = 2000;  // total sweeps, including burn-in
  long burn_in = 1000;
  long thin = 1;
  long chains = 1;
  std::uint64_t seed = 1;

  std::size_t m_dagger = 5;
  Rule rule = Rule::dino;
  SamplerMode mode = SamplerMode::finite;

  double gamma = 1.0;
  PkFamily pk_family = PkFamily::geometric;
  double pk_param = 0.1;

  double a_theta = 1.0, b_theta = 1.0;
  double a_psi = 1.0, b_psi = 1.0;
  double a_beta = 1.0, b_beta = 1.0;
  double alpha1_init = 1.0;
  double alpha2 = 1.0;

  double p_init = 0.1;
  double tau1 = 0.3;
  long split_merge_scans = 5;
  std::size_t block_cap = default_block_cap;
  long alpha_grid_points = 4096;
  double theta_lower_bound = 0.0;
  double psi_upper_bound = 1.0;

  bool fix_q = false;
  bool fix_rates = false;
  bool fix_p = false;
  bool fix_alpha1 = false;
  bool prior_only = false;

  double theta_fixed = 0.8;
  double psi_fixed = 0.15;
  double p_fixed = 0.5;

  std::optional<BinaryMatrix> fixed_q;
  std::vector<std::vector<int>> partial_clusters;

  void validate() const {
    if (iterations < 0 || burn_in < 0 || burn_in > iterations)
      throw ConfigError("need 0 <= burn_in <= iterations");
    if (thin < 1) throw ConfigError("thin must be >= 1");
    if (chains < 1) throw ConfigError("chains must be >= 1");
    if (m_dagger < 1) throw ConfigError("m_dagger must be >= 1");
    if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
    if (!(alpha1_init > 0.0)) throw ConfigError("alpha1_init must be positive");
    if (!(alpha2 > 0.0)) throw ConfigError("alpha2 must be positive");
    if (!(a_theta > 0.0 && b_theta > 0.0 && a_psi > 0.0 && b_psi > 0.0 && a_beta > 0.0 &&
          b_beta > 0.0))
      throw ConfigError("beta hyperparameters must be positive");
    if (!(p_init > 0.0 && p_init < 1.0)) throw ConfigError("p_init must lie in (0,1)");
    if (!(tau1 >= 0.0 && tau1 <= 1.0)) throw ConfigError("tau1 must lie in [0,1]");
    if (split_merge_scans < 0) throw ConfigError("split_merge_scans must be >= 0");
    if (alpha_grid_points < 16) throw ConfigError("alpha_grid_points must be >= 16");
    if (!(theta_lower_bound >= 0.0 && theta_lower_bound < 1.0))
      throw ConfigError("theta_lower_bound must lie in [0,1)");
    if (!(psi_upper_bound > 0.0 && psi_upper_bound <= 1.0))
      throw ConfigError("psi_upper_bound must lie in (0,1]");
    if (fix_rates && !(psi_fixed > 0.0 && psi_fixed < theta_fixed && theta_fixed < 1.0))
      throw ConfigError("fixed rates need 0 < psi_fixed < theta_fixed < 1");
    if (fix_p && !(p_fixed > 0.0 && p_fixed < 1.0))
      throw ConfigError("p_fixed must lie in (0,1)");
    if (mode == SamplerMode::infinite && fix_q)
      throw ConfigError("fix_q is only available in finite mode");
    if (mode == SamplerMode::infinite && fix_p)
      throw ConfigError("fix_p is only available in finite mode");
    if (mode == SamplerMode::infinite && rule == Rule::dina)
      throw ConfigError("the intersection rule needs finite mode");
    if (mode == SamplerMode::infinite && alpha2 != 1.0)
      throw ConfigError("the unbounded-machine sampler needs alpha2 = 1");
    if (fixed_q && !fix_q) throw ConfigError("fixed_q matrix supplied without fix_q");
  }

  PartitionPrior partition_prior() const { return PartitionPrior(gamma, pk_family, pk_param); }

  RatePrior rate_prior(std::size_t L) const {
    RatePrior rp = RatePrior::broadcast(L, a_theta, b_theta, a_psi, b_psi);
    rp.theta_lower = theta_lower_bound;
    rp.psi_upper = psi_upper_bound;
    return rp;
  }
};

// ---------------------------------------------------------------------------
// cluster bookkeeping

struct ClusterState {
  std::vector<int> z;                      // subject -> cluster id, 0..T-1
  std::vector<std::vector<int>> members;   // cluster -> subject list
  BinaryMatrix hstar;                      // T x M machine ownership per cluster
  std::vector<ClusterCounts> counts;       // cluster -> sufficient counts

  std::size_t n_clusters() const { return members.size(); }

  static ClusterState from_partition(const BinaryMatrix& Y,
                                     const std::vector<std::vector<int>>& blocks,
                                     std::size_t M) {
    ClusterState s;
    const std::size_t N = Y.rows();
    s.z.assign(N, -1);
    for (const auto& blk : blocks) {
      if (blk.empty()) throw DataError("empty cluster in initial partition");
      const int id = static_cast<int>(s.members.size());
      for (int i : blk) {
        if (i < 0 || static_cast<std::size_t>(i) >= N) throw DataError("subject index out of range");
        if (s.z[static_cast<std::size_t>(i)] != -1) throw DataError("subject assigned twice");
        s.z[static_cast<std::size_t>(i)] = id;
      }
      s.members.push_back(blk);
      s.counts.push_back(ClusterCounts::from_rows(Y, blk));
    }
    s.hstar = BinaryMatrix(s.members.size(), M);
    return s;
  }

  // Removes cluster j by swapping the last cluster into its slot.
  void remove_cluster(std::size_t j) {
    const std::size_t last = members.size() - 1;
    if (j != last) {
      for (int i : members[last]) z[static_cast<std::size_t>(i)] = static_cast<int>(j);
      members[j] = std::move(members[last]);
      counts[j] = std::move(counts[last]);
      hstar.swap_rows(j, last);
    }
    members.pop_back();
    counts.pop_back();
    hstar.pop_row();
  }

  void add_cluster(std::vector<int> mem, ClusterCounts c) {
    const int id = static_cast<int>(members.size());
    for (int i : mem) z[static_cast<std::size_t>(i)] = id;
    members.push_back(std::move(mem));
    counts.push_back(std::move(c));
    hstar.append_zero_row();
  }

  void check_consistency(const BinaryMatrix& Y) const {
    if (members.size() != counts.size() || members.size() != hstar.rows())
      throw DataError("cluster bookkeeping arrays disagree");
    std::size_t total = 0;
    for (std::size_t j = 0; j < members.size(); ++j) {
      if (members[j].empty()) throw DataError("empty cluster");
      total += members[j].size();
      ClusterCounts re = ClusterCounts::from_rows(Y, members[j]);
      if (!(re == counts[j])) throw DataError("cluster counts out of sync");
      for (int i : members[j])
        if (z[static_cast<std::size_t>(i)] != static_cast<int>(j))
          throw DataError("membership label out of sync");
    }
    if (total != z.size()) throw DataError("partition does not cover all subjects");
  }
};

// Subjects pinned together by a partial clustering; unlisted subjects are
// singleton units. Units are the atoms every partition move operates on.
struct MustLinkUnits {
  std::vector<std::vector<int>> members;
  std::vector<int> unit_of;
  std::vector<ClusterCounts> counts;

  std::size_t n_units() const { return members.size(); }

  static MustLinkUnits build(const BinaryMatrix& Y, const std::vector<std::vector<int>>& blocks) {
    const std::size_t N = Y.rows();
    MustLinkUnits u;
    u.unit_of.assign(N, -1);
    for (const auto& blk : blocks) {
      if (blk.empty()) throw DataError("empty block in partial clustering");
      const int id = static_cast<int>(u.members.size());
      for (int i : blk) {
        if (i < 0 || static_cast<std::size_t>(i) >= N)
          throw DataError("partial clustering index out of range");
        if (u.unit_of[static_cast<std::size_t>(i)] != -1)
          throw DataError("subject listed in two partial clusters");
        u.unit_of[static_cast<std::size_t>(i)] = id;
      }
      u.members.push_back(blk);
      u.counts.push_back(ClusterCounts::from_rows(Y, blk));
    }
    for (std::size_t i = 0; i < N; ++i) {
      if (u.unit_of[i] != -1) continue;
      const int id = static_cast<int>(u.members.size());
      u.unit_of[i] = id;
      u.members.push_back({static_cast<int>(i)});
      u.counts.push_back(ClusterCounts::from_rows(Y, {static_cast<int>(i)}));
    }
    return u;
  }
};

// ---------------------------------------------------------------------------
// machine matrix maintenance

// Redraws row m of Q for a machine no cluster currently owns. The row is
// rebuilt so the full matrix stays inside the constraint set: fresh ones only
// at columns where no other row loads (creating own singletons) or where at
// least two other rows load. Returns false and restores the old row when the
// surrounding matrix leaves no room.
inline bool reseed_unused_row(BinaryMatrix& Q, std::size_t m, const std::vector<double>& ybar,
                              double p_init, double tau1, Rng& rng) {
  const std::size_t M = Q.rows(), L = Q.cols();
  std::vector<Bit> saved(Q.row(m), Q.row(m) + L);
  std::vector<int> other(L, 0);
  for (std::size_t k = 0; k < M; ++k) {
    if (k == m) continue;
    const Bit* r = Q.row(k);
    for (std::size_t l = 0; l < L; ++l) other[l] += r[l];
  }
  Bit* row = Q.row(m);
  std::fill(row, row + L, Bit{0});
  for (std::size_t l = 0; l < L; ++l)
    if (ybar[l] > tau1 && other[l] != 1 && rng.bernoulli(p_init)) row[l] = 1;

  auto revert = [&]() {
    std::copy(saved.begin(), saved.end(), Q.row(m));
    return false;
  };

  std::size_t singles = 0;
  for (std::size_t l = 0; l < L; ++l)
    if (row[l] && other[l] == 0) ++singles;
  for (std::size_t l = 0; l < L && singles < 2; ++l)
    if (!row[l] && other[l] == 0) {
      row[l] = 1;
      ++singles;
    }
  if (singles < 2) return revert();

  std::size_t rowsum = 0;
  for (std::size_t l = 0; l < L; ++l) rowsum += row[l];
  for (std::size_t l = 0; l < L && rowsum < 3; ++l)
    if (!row[l] && other[l] >= 2) {
      row[l] = 1;
      ++rowsum;
    }
  for (std::size_t l = 0; l < L && rowsum < 3; ++l)
    if (!row[l] && other[l] == 0) {
      row[l] = 1;
      ++rowsum;
    }
  if (rowsum < 3) return revert();
  return true;
}

// Deterministically edits Q until every row has two private columns and at
// least three ones. Throws DataError when L < 2M+1 makes that impossible.
inline void repair_to_constraint_set(BinaryMatrix& Q) {
  const std::size_t M = Q.rows(), L = Q.cols();
  if (L < 2 * M + 1)
    throw DataError("machine matrix needs at least 2M+1 features for the identifiability repairs");

  auto col_ones = [&](std::size_t l) {
    std::size_t n = 0;
    for (std::size_t k = 0; k < M; ++k) n += Q(k, l);
    return n;
  };
  auto owner_of = [&](std::size_t l) {
    for (std::size_t k = 0; k < M; ++k)
      if (Q(k, l)) return k;
    return M;
  };
  auto singleton_counts = [&]() {
    std::vector<std::size_t> c(M, 0);
    for (std::size_t l = 0; l < L; ++l)
      if (col_ones(l) == 1) ++c[owner_of(l)];
    return c;
  };
  auto make_singleton = [&](std::size_t l, std::size_t m) {
    for (std::size_t k = 0; k < M; ++k) Q(k, l) = (k == m) ? 1 : 0;
  };

  for (std::size_t m = 0; m < M; ++m) {
    auto c = singleton_counts();
    while (c[m] < 2) {
      std::size_t pick = L;
      for (std::size_t l = 0; l < L && pick == L; ++l)
        if (col_ones(l) == 0) pick = l;
      for (std::size_t l = 0; l < L && pick == L; ++l)
        if (col_ones(l) >= 2) pick = l;
      for (std::size_t l = 0; l < L && pick == L; ++l)
        if (col_ones(l) == 1 && owner_of(l) != m && c[owner_of(l)] >= 3) pick = l;
      if (pick == L) throw DataError("no column available to carve out a private feature");
      make_singleton(pick, m);
      c = singleton_counts();
    }
  }

  for (std::size_t m = 0; m < M; ++m) {
    std::size_t rowsum = Q.row_sum(m);
    while (rowsum < 3) {
      auto c = singleton_counts();
      std::size_t pick = L;
      for (std::size_t l = 0; l < L && pick == L; ++l) {
        if (Q(m, l)) continue;
        const std::size_t ones = col_ones(l);
        if (ones >= 2) pick = l;
      }
      for (std::size_t l = 0; l < L && pick == L; ++l)
        if (!Q(m, l) && col_ones(l) == 0) pick = l;
      for (std::size_t l = 0; l < L && pick == L; ++l)
        if (!Q(m, l) && col_ones(l) == 1 && c[owner_of(l)] >= 3) pick = l;
      if (pick == L) throw DataError("no column available to pad a machine row");
      Q(m, pick) = 1;
      ++rowsum;
    }
  }
}

inline std::vector<double> column_means(const BinaryMatrix& Y) {
  std::vector<double> ybar(Y.cols(), 0.0);
  for (std::size_t l = 0; l < Y.cols(); ++l)
    ybar[l] = static_cast<double>(Y.col_sum(l)) / static_cast<double>(Y.rows());
  return ybar;
}

inline BinaryMatrix init_Q(const BinaryMatrix& Y, std::size_t M, double p_init, double tau1,
                           Rng& rng) {
  const std::size_t L = Y.cols();
  const std::vector<double> ybar = column_means(Y);
  BinaryMatrix Q(M, L);
  for (std::size_t l = 0; l < L; ++l)
    if (ybar[l] > tau1)
      for (std::size_t m = 0; m < M; ++m)
        if (rng.bernoulli(p_init)) Q(m, l) = 1;
  repair_to_constraint_set(Q);
  return Q;
}

// ---------------------------------------------------------------------------
// full sampler state

struct SamplerState {
  ClusterState clusters;
  BinaryMatrix Q;
  RateParams rates;
  std::vector<double> p;
  double alpha1 = 1.0;
};

inline SamplerState init_state(const BinaryMatrix& Y, const SamplerConfig& cfg, Rng& rng) {
  const std::size_t N = Y.rows(), L = Y.cols();
  if (N == 0 || L == 0) throw DataError("empty data matrix");
  SamplerState st;

  if (cfg.fix_q) {
    st.Q = cfg.fixed_q ? *cfg.fixed_q : BinaryMatrix::identity(L);
    if (st.Q.cols() != L) throw DataError("fixed machine matrix feature count mismatch");
    if (st.Q.rows() == 0) throw DataError("fixed machine matrix has no rows");
  } else {
    st.Q = init_Q(Y, cfg.m_dagger, cfg.p_init, cfg.tau1, rng);
  }
  const std::size_t M = st.Q.rows();

  std::vector<std::vector<int>> blocks;
  if (cfg.partial_clusters.empty()) {
    std::vector<int> all(N);
    std::iota(all.begin(), all.end(), 0);
    blocks.push_back(std::move(all));
  } else {
    std::vector<char> seen(N, 0);
    for (const auto& blk : cfg.partial_clusters) {
      blocks.push_back(blk);
      for (int i : blk) {
        if (i < 0 || static_cast<std::size_t>(i) >= N)
          throw DataError("partial clustering index out of range");
        seen[static_cast<std::size_t>(i)] = 1;
      }
    }
    for (std::size_t i = 0; i < N; ++i)
      if (!seen[i]) blocks.push_back({static_cast<int>(i)});
  }
  st.clusters = ClusterState::from_partition(Y, blocks, M);

  st.alpha1 = cfg.alpha1_init;
  const double a = st.alpha1 * cfg.alpha2 / static_cast<double>(M);
  st.p.resize(M);
  for (std::size_t m = 0; m < M; ++m)
    st.p[m] = cfg.fix_p ? cfg.p_fixed : rng.beta(a, cfg.alpha2);
  for (std::size_t j = 0; j < st.clusters.n_clusters(); ++j)
    for (std::size_t m = 0; m < M; ++m) st.clusters.hstar(j, m) = rng.bernoulli(st.p[m]);

  st.rates.theta.resize(L);
  st.rates.psi.resize(L);
  if (cfg.fix_rates) {
    st.rates = RateParams::constant(L, cfg.theta_fixed, cfg.psi_fixed);
  } else {
    for (std::size_t l = 0; l < L; ++l) {
      st.rates.psi[l] =
          sample_truncated_beta(cfg.a_psi, cfg.b_psi, 0.0, cfg.psi_upper_bound, rng);
      st.rates.theta[l] = sample_truncated_beta(
          cfg.a_theta, cfg.b_theta, std::max(st.rates.psi[l], cfg.theta_lower_bound), 1.0, rng);
    }
  }
  st.rates.validate();
  return st;
}

// ---------------------------------------------------------------------------
// partition updates

inline double cluster_g(const ClusterCounts& c, const BinaryMatrix& Q, const StateBlocks& blocks,
                        const RateParams& rates, const std::vector<double>& p, Rule rule,
                        std::size_t cap, bool prior_only) {
  if (prior_only) return 0.0;
  return marginal_loglik_g(c, Q, rates, p, rule, blocks, cap);
}

// One sweep of collapsed Gibbs over must-link units.
inline void gibbs_update_Z(ClusterState& state, const BinaryMatrix& Q, const StateBlocks& blocks,
                           const RateParams& rates, const std::vector<double>& p,
                           const PartitionPrior& prior, const MustLinkUnits& units, Rule rule,
                           std::size_t block_cap, bool prior_only, Rng& rng) {
  const long N = static_cast<long>(state.z.size());
  const double gam = prior.gamma();

  std::vector<double> logg(state.n_clusters());
  for (std::size_t j = 0; j < logg.size(); ++j)
    logg[j] = cluster_g(state.counts[j], Q, blocks, rates, p, rule, block_cap, prior_only);

  for (std::size_t u = 0; u < units.n_units(); ++u) {
    const auto& umem = units.members[u];
    const auto& ucounts = units.counts[u];
    const long b = static_cast<long>(umem.size());
    const std::size_t jcur = static_cast<std::size_t>(state.z[static_cast<std::size_t>(umem[0])]);
    if (static_cast<long>(umem.size()) == N) continue;  // lone unit: placement is forced

    for (int i : umem) {
      auto& mem = state.members[jcur];
      mem.erase(std::find(mem.begin(), mem.end(), i));
      state.z[static_cast<std::size_t>(i)] = -1;
    }
    state.counts[jcur].subtract(ucounts);
    if (state.counts[jcur].size == 0) {
      state.remove_cluster(jcur);
      const std::size_t last = logg.size() - 1;
      logg[jcur] = logg[last];
      logg.pop_back();
    } else {
      logg[jcur] = cluster_g(state.counts[jcur], Q, blocks, rates, p, rule, block_cap, prior_only);
    }

    const long t = static_cast<long>(state.n_clusters());
    std::vector<double> w(static_cast<std::size_t>(t) + 1);
    std::vector<double> cand(static_cast<std::size_t>(t));
    for (long c = 0; c < t; ++c) {
      auto& cc = state.counts[static_cast<std::size_t>(c)];
      const double asc = log_ascending(gam + static_cast<double>(cc.size), b);
      cc.add(ucounts);
      cand[static_cast<std::size_t>(c)] =
          cluster_g(cc, Q, blocks, rates, p, rule, block_cap, prior_only);
      cc.subtract(ucounts);
      w[static_cast<std::size_t>(c)] = asc + cand[static_cast<std::size_t>(c)] - logg[static_cast<std::size_t>(c)];
    }
    const double gunit = cluster_g(ucounts, Q, blocks, rates, p, rule, block_cap, prior_only);
    w[static_cast<std::size_t>(t)] =
        log_ascending(gam, b) + prior.log_Vn(t + 1, N) - prior.log_Vn(t, N) + gunit;

    const std::size_t pick = rng.categorical_log(w);
    if (pick < static_cast<std::size_t>(t)) {
      for (int i : umem) {
        state.members[pick].push_back(i);
        state.z[static_cast<std::size_t>(i)] = static_cast<int>(pick);
      }
      state.counts[pick].add(ucounts);
      logg[pick] = cand[pick];
    } else {
      state.add_cluster(umem, ucounts);
      logg.push_back(gunit);
    }
  }
}

namespace detail {

struct SplitMergeBucket {
  std::vector<std::size_t> units;
  ClusterCounts counts;
  double logg = 0.0;

  explicit SplitMergeBucket(std::size_t L) : counts(L) {}
};

}  // namespace detail

// Jain/Neal split-merge step on units, using the collapsed cluster weight.
// One restricted-scan pass over the free units; when `forced` is non-null the
// scan replays that assignment instead of sampling and only accumulates its
// proposal probability.
inline double restricted_scan(detail::SplitMergeBucket& A, detail::SplitMergeBucket& B,
                              const std::vector<std::size_t>& free_units,
                              std::vector<int>& side_of, const MustLinkUnits& units,
                              const BinaryMatrix& Q, const StateBlocks& blocks,
                              const RateParams& rates, const std::vector<double>& p, double gam,
                              Rule rule, std::size_t cap, bool prior_only, Rng& rng,
                              const std::vector<int>* forced = nullptr) {
  double logq = 0.0;
  for (std::size_t u : free_units) {
    const auto& ucounts = units.counts[u];
    const long b = static_cast<long>(units.members[u].size());
    detail::SplitMergeBucket& from = side_of[u] == 0 ? A : B;
    from.units.erase(std::find(from.units.begin(), from.units.end(), u));
    from.counts.subtract(ucounts);
    from.logg = cluster_g(from.counts, Q, blocks, rates, p, rule, cap, prior_only);

    double wa, wb, ga, gb;
    {
      A.counts.add(ucounts);
      ga = cluster_g(A.counts, Q, blocks, rates, p, rule, cap, prior_only);
      A.counts.subtract(ucounts);
      wa = log_ascending(gam + static_cast<double>(A.counts.size), b) + ga - A.logg;
      B.counts.add(ucounts);
      gb = cluster_g(B.counts, Q, blocks, rates, p, rule, cap, prior_only);
      B.counts.subtract(ucounts);
      wb = log_ascending(gam + static_cast<double>(B.counts.size), b) + gb - B.logg;
    }
    const double lse = log_add_exp(wa, wb);
    int side;
    if (forced) {
      side = (*forced)[u];
    } else {
      side = rng.uniform() < std::exp(wa - lse) ? 0 : 1;
    }
    logq += (side == 0 ? wa : wb) - lse;
    detail::SplitMergeBucket& to = side == 0 ? A : B;
    to.units.push_back(u);
    to.counts.add(ucounts);
    to.logg = side == 0 ? ga : gb;
    side_of[u] = side;
  }
  return logq;
}

inline void split_merge_move(ClusterState& state, const BinaryMatrix& Y, const BinaryMatrix& Q,
                             const StateBlocks& blocks, const RateParams& rates,
                             const std::vector<double>& p, const PartitionPrior& prior,
                             const MustLinkUnits& units, Rule rule, std::size_t block_cap,
                             bool prior_only, long n_scans, Rng& rng) {
  const long N = static_cast<long>(state.z.size());
  const std::size_t L = Y.cols();
  if (N < 2) return;
  const double gam = prior.gamma();

  const std::size_t si = rng.uniform_below(static_cast<std::uint64_t>(N));
  std::size_t sj = rng.uniform_below(static_cast<std::uint64_t>(N - 1));
  if (sj >= si) ++sj;
  const std::size_t ui = static_cast<std::size_t>(units.unit_of[si]);
  const std::size_t uj = static_cast<std::size_t>(units.unit_of[sj]);
  if (ui == uj) return;

  const int ci = state.z[si];
  const int cj = state.z[sj];
  const bool propose_split = (ci == cj);

  // Units involved in the move and their fixed scan order.
  std::vector<std::size_t> pool;
  {
    std::vector<char> in(units.n_units(), 0);
    for (std::size_t i = 0; i < state.z.size(); ++i)
      if (state.z[i] == ci || state.z[i] == cj) in[static_cast<std::size_t>(units.unit_of[i])] = 1;
    for (std::size_t u = 0; u < units.n_units(); ++u)
      if (in[u]) pool.push_back(u);
  }
  std::vector<std::size_t> free_units;
  for (std::size_t u : pool)
    if (u != ui && u != uj) free_units.push_back(u);

  std::vector<int> side_of(units.n_units(), -1);
  detail::SplitMergeBucket A(L), B(L);
  auto seed_bucket = [&](detail::SplitMergeBucket& bk, std::size_t u, int side) {
    bk.units.push_back(u);
    bk.counts.add(units.counts[u]);
    side_of[u] = side;
  };
  seed_bucket(A, ui, 0);
  seed_bucket(B, uj, 1);
  for (std::size_t u : free_units) {
    const int side = rng.bernoulli(0.5) ? 0 : 1;
    seed_bucket(side == 0 ? A : B, u, side);
  }
  A.logg = cluster_g(A.counts, Q, blocks, rates, p, rule, block_cap, prior_only);
  B.logg = cluster_g(B.counts, Q, blocks, rates, p, rule, block_cap, prior_only);
  for (long s = 0; s < n_scans; ++s)
    restricted_scan(A, B, free_units, side_of, units, Q, blocks, rates, p, gam, rule, block_cap,
                    prior_only, rng);

  const long t = static_cast<long>(state.n_clusters());

  if (propose_split) {
    const double logq =
        restricted_scan(A, B, free_units, side_of, units, Q, blocks, rates, p, gam, rule,
                        block_cap, prior_only, rng);
    const ClusterCounts& sc = state.counts[static_cast<std::size_t>(ci)];
    const double gS = cluster_g(sc, Q, blocks, rates, p, rule, block_cap, prior_only);
    const double log_accept =
        (prior.log_Vn(t + 1, N) - prior.log_Vn(t, N)) +
        (log_ascending(gam, static_cast<long>(A.counts.size)) +
         log_ascending(gam, static_cast<long>(B.counts.size)) -
         log_ascending(gam, static_cast<long>(sc.size))) +
        (A.logg + B.logg - gS) - logq;
    if (std::log(rng.uniform_pos()) < log_accept) {
      auto unit_subjects = [&](const std::vector<std::size_t>& us) {
        std::vector<int> out;
        for (std::size_t u : us)
          out.insert(out.end(), units.members[u].begin(), units.members[u].end());
        return out;
      };
      std::vector<int> amem = unit_subjects(A.units);
      std::vector<int> bmem = unit_subjects(B.units);
      state.members[static_cast<std::size_t>(ci)] = amem;
      state.counts[static_cast<std::size_t>(ci)] = A.counts;
      for (int i : amem) state.z[static_cast<std::size_t>(i)] = ci;
      state.add_cluster(std::move(bmem), B.counts);
    }
  } else {
    // Merge: replay the hypothetical split of the merged cluster back into
    // the current two clusters to price the reverse move.
    std::vector<int> orig_side(units.n_units(), -1);
    for (std::size_t u : pool) {
      const int c = state.z[static_cast<std::size_t>(units.members[u][0])];
      orig_side[u] = (c == ci) ? 0 : 1;
    }
    const double logq = restricted_scan(A, B, free_units, side_of, units, Q, blocks, rates, p,
                                        gam, rule, block_cap, prior_only, rng, &orig_side);

    ClusterCounts merged(L);
    merged.add(state.counts[static_cast<std::size_t>(ci)]);
    merged.add(state.counts[static_cast<std::size_t>(cj)]);
    const double gM = cluster_g(merged, Q, blocks, rates, p, rule, block_cap, prior_only);
    const double gI = cluster_g(state.counts[static_cast<std::size_t>(ci)], Q, blocks, rates, p,
                                rule, block_cap, prior_only);
    const double gJ = cluster_g(state.counts[static_cast<std::size_t>(cj)], Q, blocks, rates, p,
                                rule, block_cap, prior_only);
    const double log_accept =
        (prior.log_Vn(t - 1, N) - prior.log_Vn(t, N)) +
        (log_ascending(gam, static_cast<long>(merged.size)) -
         log_ascending(gam, static_cast<long>(state.counts[static_cast<std::size_t>(ci)].size)) -
         log_ascending(gam, static_cast<long>(state.counts[static_cast<std::size_t>(cj)].size))) +
        (gM - gI - gJ) + logq;
    if (std::log(rng.uniform_pos()) < log_accept) {
      for (int i : state.members[static_cast<std::size_t>(cj)]) {
        state.members[static_cast<std::size_t>(ci)].push_back(i);
        state.z[static_cast<std::size_t>(i)] = ci;
      }
      state.members[static_cast<std::size_t>(cj)].clear();
      state.counts[static_cast<std::size_t>(ci)] = merged;
      state.remove_cluster(static_cast<std::size_t>(cj));
    }
  }
}

// Metropolis-Hastings split/merge proposal followed by one full reassignment
// sweep, so a rejected proposal still leaves a refreshed partition.
inline void split_merge_update(ClusterState& state, const BinaryMatrix& Y, const BinaryMatrix& Q,
                               const StateBlocks& blocks, const RateParams& rates,
                               const std::vector<double>& p, const PartitionPrior& prior,
                               const MustLinkUnits& units, Rule rule, std::size_t block_cap,
                               bool prior_only, long n_scans, Rng& rng) {
  if (units.n_units() >= 2)
    split_merge_move(state, Y, Q, blocks, rates, p, prior, units, rule, block_cap, prior_only,
                     n_scans, rng);
  gibbs_update_Z(state, Q, blocks, rates, p, prior, units, rule, block_cap, prior_only, rng);
}

// ---------------------------------------------------------------------------
// per-cluster machine ownership

inline void update_Hstar(ClusterState& state, const BinaryMatrix& Q, const StateBlocks& blocks,
                         const RateParams& rates, const std::vector<double>& p, Rule rule,
                         std::size_t block_cap, bool prior_only, Rng& rng) {
  const std::size_t T = state.n_clusters();
  for (std::size_t j = 0; j < T; ++j) {
    for (std::size_t bidx = 0; bidx < blocks.states.size(); ++bidx) {
      const auto& bstates = blocks.states[bidx];
      const auto& bfeatures = blocks.features[bidx];
      if (prior_only || bfeatures.empty()) {
        for (std::size_t m : bstates) state.hstar(j, m) = rng.bernoulli(p[m]);
        continue;
      }
      std::vector<double> w =
          block_pattern_logliks(bstates, bfeatures, state.counts[j], Q, rates, rule, block_cap);
      const std::vector<double> pw = block_pattern_logpriors(bstates, p);
      for (std::size_t a = 0; a < w.size(); ++a) w[a] += pw[a];
      const std::size_t pick = rng.categorical_log(w);
      for (std::size_t k = 0; k < bstates.size(); ++k)
        state.hstar(j, bstates[k]) = static_cast<Bit>((pick >> k) & 1U);
    }
  }
}

// ---------------------------------------------------------------------------
// duplicate-machine cleanup (union rule only)

// When two machines are owned by exactly the same clusters the union rule
// cannot tell them apart, so fold them into one machine whose feature row is
// the union, then redraw the vacated row. Every fold is transactional: if the
// vacated row cannot be rebuilt inside the constraint set the fold is undone.
inline void merge_partner_states(ClusterState& state, BinaryMatrix& Q,
                                 const std::vector<double>& ybar, double p_init, double tau1,
                                 Rule rule, Rng& rng) {
  if (rule != Rule::dino) return;
  const std::size_t T = state.n_clusters(), M = Q.rows(), L = Q.cols();
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t m = 0; m < M; ++m) {
    std::string key(T, '0');
    bool any = false;
    for (std::size_t j = 0; j < T; ++j)
      if (state.hstar(j, m)) {
        key[j] = '1';
        any = true;
      }
    if (any) groups[key].push_back(m);
  }
  for (auto& [key, ms] : groups) {
    if (ms.size() < 2) continue;
    const std::size_t keep = ms[0];
    for (std::size_t k = 1; k < ms.size(); ++k) {
      const std::size_t drop = ms[k];
      std::vector<Bit> saved_keep(Q.row(keep), Q.row(keep) + L);
      std::vector<Bit> saved_hcol(T);
      for (std::size_t j = 0; j < T; ++j) saved_hcol[j] = state.hstar(j, drop);

      for (std::size_t l = 0; l < L; ++l)
        Q(keep, l) = std::max(Q(keep, l), Q(drop, l));
      for (std::size_t j = 0; j < T; ++j) state.hstar(j, drop) = 0;
      if (!reseed_unused_row(Q, drop, ybar, p_init, tau1, rng)) {
        std::copy(saved_keep.begin(), saved_keep.end(), Q.row(keep));
        for (std::size_t j = 0; j < T; ++j) state.hstar(j, drop) = saved_hcol[j];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// response-rate update

inline void update_rates(RateParams& rates, const ClusterState& state, const BinaryMatrix& Q,
                         const RatePrior& prior, Rule rule, Rng& rng,
                         std::vector<std::string>* warnings = nullptr) {
  const std::size_t T = state.n_clusters(), L = Q.cols();
  const BinaryMatrix xi = build_gamma(state.hstar, Q, rule);
  for (std::size_t l = 0; l < L; ++l) {
    double s1 = 0, s0 = 0, f1 = 0, f0 = 0;
    for (std::size_t j = 0; j < T; ++j) {
      const auto& c = state.counts[j];
      const double n1 = static_cast<double>(c.n1[l]);
      const double n0 = static_cast<double>(c.n0(l));
      if (xi(j, l)) {
        s1 += n1;
        s0 += n0;
      } else {
        f1 += n1;
        f0 += n0;
      }
    }
    const double psi_hi = std::min(rates.theta[l], prior.psi_upper);
    try {
      rates.psi[l] = sample_truncated_beta(f1 + prior.a_psi[l], f0 + prior.b_psi[l], 0.0, psi_hi, rng);
    } catch (const NumericError&) {
      rates.psi[l] = rng.uniform(0.0, psi_hi);
      if (warnings) warnings->push_back("psi draw fell back to a uniform over its support");
    }
    const double th_lo = std::max(rates.psi[l], prior.theta_lower);
    try {
      rates.theta[l] =
          sample_truncated_beta(s1 + prior.a_theta[l], s0 + prior.b_theta[l], th_lo, 1.0, rng);
    } catch (const NumericError&) {
      rates.theta[l] = rng.uniform(th_lo, 1.0);
      if (warnings) warnings->push_back("theta draw fell back to a uniform over its support");
    }
  }
  rates.validate();
}

// ---------------------------------------------------------------------------
// feature-prevalence hyperparameter update

inline double alpha1_conditional_logdensity(double beta, const std::vector<long>& colsums, long T,
                                            double a_beta, double b_beta, double alpha2) {
  if (!(beta > 0.0 && beta < 1.0)) return neg_inf;
  const double M = static_cast<double>(colsums.size());
  const double a = beta / (1.0 - beta) * alpha2 / M;
  double ld = log_beta_pdf(beta, a_beta, b_beta);
  for (long s : colsums)
    ld += log_beta_fn(static_cast<double>(s) + a, static_cast<double>(T - s) + alpha2) -
          log_beta_fn(a, alpha2);
  return ld;
}

inline double update_alpha1(const BinaryMatrix& Hstar, double a_beta, double b_beta, double alpha2,
                            long grid_points, Rng& rng) {
  const long T = static_cast<long>(Hstar.rows());
  std::vector<long> colsums(Hstar.cols());
  for (std::size_t m = 0; m < Hstar.cols(); ++m)
    colsums[m] = static_cast<long>(Hstar.col_sum(m));

  const std::size_t G = static_cast<std::size_t>(grid_points);
  std::vector<double> logw(G);
  for (std::size_t g = 0; g < G; ++g) {
    const double beta = (static_cast<double>(g) + 0.5) / static_cast<double>(G);
    logw[g] = alpha1_conditional_logdensity(beta, colsums, T, a_beta, b_beta, alpha2);
  }
  normalize_log_weights(logw);  // logw now holds linear cell probabilities
  double u = rng.uniform_pos();
  double beta = 0.5;
  for (std::size_t g = 0; g < G; ++g) {
    const double w = logw[g];
    if (u <= w || g == G - 1) {
      const double frac = w > 0.0 ? std::min(1.0, u / w) : 0.5;
      beta = (static_cast<double>(g) + frac) / static_cast<double>(G);
      break;
    }
    u -= w;
  }
  beta = std::min(std::max(beta, 1e-12), 1.0 - 1e-12);
  return beta / (1.0 - beta);
}

inline std::vector<double> update_p(const BinaryMatrix& Hstar, double alpha1, double alpha2,
                                    Rng& rng) {
  const double T = static_cast<double>(Hstar.rows());
  const double M = static_cast<double>(Hstar.cols());
  std::vector<double> p(Hstar.cols());
  for (std::size_t m = 0; m < Hstar.cols(); ++m) {
    const double s = static_cast<double>(Hstar.col_sum(m));
    p[m] = rng.beta(s + alpha1 * alpha2 / M, (T - s) + alpha2);
  }
  return p;
}

// ---------------------------------------------------------------------------
// machine-feature matrix update

// Elementwise Gibbs over Q entries under the flat constraint-set prior.
// Entries whose flip could leave the constraint set are skipped: ones in a
// column that is some machine's only loading, ones in a row at its minimum
// size, and zero->one flips that would absorb another machine's
// second-to-last private column.
inline void update_Q(BinaryMatrix& Q, const ClusterState& state, const RateParams& rates,
                     Rule rule, Rng& rng) {
  const std::size_t M = Q.rows(), L = Q.cols(), T = state.n_clusters();
  if (!q_in_constraint_set(Q)) throw DataError("machine matrix update started outside the constraint set");

  std::vector<std::size_t> npool(L, 0);
  std::vector<std::vector<std::size_t>> cjl(T, std::vector<std::size_t>(L, 0));
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t m = 0; m < M; ++m) {
      if (!Q(m, l)) continue;
      ++npool[l];
      for (std::size_t j = 0; j < T; ++j)
        if (state.hstar(j, m)) ++cjl[j][l];
    }
  }
  std::vector<std::size_t> rowsum(M);
  for (std::size_t m = 0; m < M; ++m) rowsum[m] = Q.row_sum(m);
  std::vector<std::size_t> singles(M, 0);
  auto col_owner = [&](std::size_t l) {
    for (std::size_t m = 0; m < M; ++m)
      if (Q(m, l)) return m;
    return M;
  };
  for (std::size_t l = 0; l < L; ++l)
    if (npool[l] == 1) ++singles[col_owner(l)];

  // per-feature per-cluster likelihood terms under each latent indicator
  std::vector<double> term1(T * L), term0(T * L);
  for (std::size_t j = 0; j < T; ++j) {
    const auto& c = state.counts[j];
    for (std::size_t l = 0; l < L; ++l) {
      const double n1 = static_cast<double>(c.n1[l]);
      const double n0 = static_cast<double>(c.n0(l));
      term1[j * L + l] = detail::count_term(n1, std::log(rates.theta[l])) +
                         detail::count_term(n0, std::log1p(-rates.theta[l]));
      term0[j * L + l] = detail::count_term(n1, std::log(rates.psi[l])) +
                         detail::count_term(n0, std::log1p(-rates.psi[l]));
    }
  }

  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t l = 0; l < L; ++l) {
      const Bit cur = Q(m, l);
      if (cur) {
        if (npool[l] == 1) continue;
        if (rowsum[m] == 3) continue;
      } else {
        if (npool[l] == 1) {
          const std::size_t owner = col_owner(l);
          if (singles[owner] <= 2) continue;
        }
      }
      double w[2];
      for (int v = 0; v < 2; ++v) {
        const std::size_t np =
            npool[l] - static_cast<std::size_t>(cur) + static_cast<std::size_t>(v);
        double acc = 0.0;
        for (std::size_t j = 0; j < T; ++j) {
          const std::size_t h = state.hstar(j, m);
          const std::size_t cj = cjl[j][l] - static_cast<std::size_t>(cur) * h +
                                 static_cast<std::size_t>(v) * h;
          const bool on = rule == Rule::dino ? (cj > 0) : (cj == np);
          acc += on ? term1[j * L + l] : term0[j * L + l];
        }
        w[v] = acc;
      }
      const double p1 = 1.0 / (1.0 + std::exp(w[0] - w[1]));
      const Bit nv = rng.uniform() < p1 ? 1 : 0;
      if (nv == cur) continue;

      if (npool[l] == 1 && nv == 1) --singles[col_owner(l)];
      Q(m, l) = nv;
      if (nv) {
        ++npool[l];
        ++rowsum[m];
      } else {
        --npool[l];
        --rowsum[m];
      }
      for (std::size_t j = 0; j < T; ++j) {
        if (!state.hstar(j, m)) continue;
        if (nv)
          ++cjl[j][l];
        else
          --cjl[j][l];
      }
      if (npool[l] == 1) ++singles[col_owner(l)];
    }
  }
}

inline void reset_unused_rows(BinaryMatrix& Q, const ClusterState& state,
                              const std::vector<double>& ybar, double p_init, double tau1,
                              Rng& rng) {
  const std::size_t M = Q.rows();
  for (std::size_t m = 0; m < M; ++m) {
    bool used = false;
    for (std::size_t j = 0; j < state.n_clusters() && !used; ++j)
      if (state.hstar(j, m)) used = true;
    if (!used) reseed_unused_row(Q, m, ybar, p_init, tau1, rng);
  }
}

// ---------------------------------------------------------------------------
// label canonicalisation for recorded draws

inline std::vector<std::size_t> relabel_perm(const BinaryMatrix& Q) {
  std::vector<std::size_t> perm(Q.rows());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(Q.row(b), Q.row(b) + Q.cols(), Q.row(a),
                                        Q.row(a) + Q.cols());
  });
  return perm;
}

inline std::pair<BinaryMatrix, BinaryMatrix> relabel_states(const BinaryMatrix& Q,
                                                            const BinaryMatrix& Hstar) {
  const std::vector<std::size_t> perm = relabel_perm(Q);
  return {Q.select_rows(perm), Hstar.select_cols(perm)};
}

// ---------------------------------------------------------------------------
// chain driver

struct Draw {
  long iter = 0;
  std::vector<int> z;
  BinaryMatrix hstar;
  BinaryMatrix q;
  std::vector<double> theta, psi, p;
  double alpha1 = 0.0;
  double logpost = 0.0;
  long t_tilde = 0;
};

struct ChainOutput {
  long chain_index = 0;
  std::uint64_t master_seed = 0;
  SamplerConfig config;
  std::size_t n = 0, l = 0;
  std::vector<Draw> draws;
  std::vector<std::string> warnings;
};

inline long count_distinct_rows(const BinaryMatrix& A) {
  std::vector<std::string> rows(A.rows());
  for (std::size_t r = 0; r < A.rows(); ++r) rows[r] = A.row_string(r);
  std::sort(rows.begin(), rows.end());
  return static_cast<long>(std::unique(rows.begin(), rows.end()) - rows.begin());
}

inline std::vector<int> canonical_labels(const std::vector<int>& z, std::vector<std::size_t>& order) {
  order.clear();
  std::vector<int> relabel(z.size(), -1);
  std::vector<int> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const int c = z[i];
    if (relabel[static_cast<std::size_t>(c)] == -1) {
      relabel[static_cast<std::size_t>(c)] = static_cast<int>(order.size());
      order.push_back(static_cast<std::size_t>(c));
    }
    out[i] = relabel[static_cast<std::size_t>(c)];
  }
  return out;
}

inline Draw record_draw(const SamplerState& st, const BinaryMatrix& Y, const SamplerConfig& cfg,
                        const PartitionPrior& prior, const RatePrior& rate_prior, long iter) {
  Draw d;
  d.iter = iter;
  std::vector<std::size_t> cluster_order;
  d.z = canonical_labels(st.clusters.z, cluster_order);
  BinaryMatrix h = st.clusters.hstar.select_rows(cluster_order);
  const std::vector<std::size_t> perm = relabel_perm(st.Q);
  d.q = st.Q.select_rows(perm);
  d.hstar = h.select_cols(perm);
  d.p.resize(perm.size());
  for (std::size_t m = 0; m < perm.size(); ++m) d.p[m] = st.p[perm[m]];
  d.theta = st.rates.theta;
  d.psi = st.rates.psi;
  d.alpha1 = st.alpha1;
  d.t_tilde = count_distinct_rows(st.clusters.hstar);
  d.logpost = joint_logpost(Y, st.clusters.z, st.clusters.hstar, st.Q, st.rates, st.alpha1,
                            prior, cfg.alpha2, rate_prior, cfg.a_beta, cfg.b_beta, cfg.rule);
  return d;
}

inline ChainOutput run_chain(const BinaryMatrix& Y, const SamplerConfig& cfg, long chain_index) {
  cfg.validate();
  if (cfg.mode != SamplerMode::finite)
    throw ConfigError("run_chain drives the finite sampler; use run_slice_chain");
  Rng rng = Rng::substream(cfg.seed, static_cast<std::uint64_t>(chain_index));

  ChainOutput out;
  out.chain_index = chain_index;
  out.master_seed = cfg.seed;
  out.config = cfg;
  out.n = Y.rows();
  out.l = Y.cols();

  SamplerState st = init_state(Y, cfg, rng);
  const PartitionPrior prior = cfg.partition_prior();
  const RatePrior rate_prior = cfg.rate_prior(Y.cols());
  const MustLinkUnits units = MustLinkUnits::build(Y, cfg.partial_clusters);
  const std::vector<double> ybar = column_means(Y);

  StateBlocks blocks = rcm_state_blocks(st.Q);
  for (long iter = 1; iter <= cfg.iterations; ++iter) {
    if (units.n_units() >= 2)
      split_merge_move(st.clusters, Y, st.Q, blocks, st.rates, st.p, prior, units, cfg.rule,
                       cfg.block_cap, cfg.prior_only, cfg.split_merge_scans, rng);
    gibbs_update_Z(st.clusters, st.Q, blocks, st.rates, st.p, prior, units, cfg.rule,
                   cfg.block_cap, cfg.prior_only, rng);
    update_Hstar(st.clusters, st.Q, blocks, st.rates, st.p, cfg.rule, cfg.block_cap,
                 cfg.prior_only, rng);
    if (!cfg.fix_q) {
      merge_partner_states(st.clusters, st.Q, ybar, cfg.p_init, cfg.tau1, cfg.rule, rng);
      blocks = rcm_state_blocks(st.Q);
    }
    if (!cfg.fix_rates) update_rates(st.rates, st.clusters, st.Q, rate_prior, cfg.rule, rng, &out.warnings);
    if (!cfg.fix_alpha1)
      st.alpha1 = update_alpha1(st.clusters.hstar, cfg.a_beta, cfg.b_beta, cfg.alpha2,
                                cfg.alpha_grid_points, rng);
    if (!cfg.fix_p) st.p = update_p(st.clusters.hstar, st.alpha1, cfg.alpha2, rng);
    if (!cfg.fix_q) {
      update_Q(st.Q, st.clusters, st.rates, cfg.rule, rng);
      reset_unused_rows(st.Q, st.clusters, ybar, cfg.p_init, cfg.tau1, rng);
      blocks = rcm_state_blocks(st.Q);
    }
    if (iter > cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0)
      out.draws.push_back(record_draw(st, Y, cfg, prior, rate_prior, iter));
  }
  return out;
}

inline std::vector<ChainOutput> run_chains(const BinaryMatrix& Y, const SamplerConfig& cfg) {
  std::vector<ChainOutput> out;
  for (long c = 0; c < cfg.chains; ++c) out.push_back(run_chain(Y, cfg, c));
  return out;
}

}  // namespace rlcm
