#pragma once

// Semi-ordered slice sampler for the unbounded-machine model. Machines owned
// by at least one cluster carry unordered inclusion weights; the unowned tail
// is represented by a decreasing stick sequence regenerated each sweep down to
// the current slice level, so only finitely many machines are ever held.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "rlcm/bits.hpp"
#include "rlcm/errors.hpp"
#include "rlcm/mathutil.hpp"
#include "rlcm/model.hpp"
#include "rlcm/priors.hpp"
#include "rlcm/rng.hpp"
#include "rlcm/sampler.hpp"

namespace rlcm {

// Log density, up to a constant, of the next unowned stick below the previous
// one when t clusters are present:
//   f(p) ~ exp(alpha * sum_{j=1..t} (1-p)^j / j) * p^(alpha-1) * (1-p)^t.
inline double stick_logdensity(double pval, long t, double alpha) {
  if (!(pval > 0.0) || !(pval < 1.0)) return neg_inf;
  const double om = 1.0 - pval;
  double acc = 0.0, powj = 1.0;
  for (long j = 1; j <= t; ++j) {
    powj *= om;
    acc += powj / static_cast<double>(j);
  }
  return alpha * acc + (alpha - 1.0) * std::log(pval) + static_cast<double>(t) * std::log(om);
}

namespace detail {

constexpr std::size_t stick_grid_points = 1024;
constexpr double stick_floor = 1e-12;

// Inverse-CDF draw from a trapezoid approximation of the stick density on a
// log-spaced grid. Works for any shape; used when the density is not concave.
inline double sample_stick_grid(double hi, long t, double alpha, Rng& rng) {
  const std::size_t G = stick_grid_points;
  const double ulo = std::log(stick_floor), uhi = std::log(hi);
  std::vector<double> u(G), v(G);
  double gmax = neg_inf;
  for (std::size_t k = 0; k < G; ++k) {
    u[k] = ulo + (uhi - ulo) * static_cast<double>(k) / static_cast<double>(G - 1);
    v[k] = stick_logdensity(std::exp(u[k]), t, alpha) + u[k];
    gmax = std::max(gmax, v[k]);
  }
  if (!std::isfinite(gmax)) throw NumericError("stick grid has no usable mass");
  for (double& x : v) x = std::exp(x - gmax);
  std::vector<double> cell(G - 1);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < G; ++k) {
    cell[k] = 0.5 * (v[k] + v[k + 1]) * (u[k + 1] - u[k]);
    total += cell[k];
  }
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericError("stick grid has no usable mass");

  double target = rng.uniform_pos() * total;
  std::size_t k = 0;
  while (k + 2 < G && target > cell[k]) {
    target -= cell[k];
    ++k;
  }
  target = std::min(target, cell[k]);
  const double du = u[k + 1] - u[k];
  const double slope = (v[k + 1] - v[k]) / du;
  // solve v[k]*x + slope*x^2/2 = target on [0, du]
  const double disc = std::max(0.0, v[k] * v[k] + 2.0 * slope * target);
  double x;
  const double denom = v[k] + std::sqrt(disc);
  if (denom > 0.0)
    x = 2.0 * target / denom;
  else
    x = 0.5 * du;
  x = std::min(std::max(x, 0.0), du);
  return std::exp(u[k] + x);
}

// Rejection draw under a piecewise-exponential envelope built from chord
// slopes, which bracket the derivative when the log density is concave.
// Returns false (without consuming randomness) when the concavity probe
// fails, and false after too many rejections.
inline bool sample_stick_concave(double hi, long t, double alpha, Rng& rng, double& out) {
  constexpr std::size_t K = 33;
  const double lo = stick_floor;
  if (!(hi > 8.0 * lo)) return false;
  const double h = (hi - lo) / static_cast<double>(K - 1);
  double x[K], f[K];
  for (std::size_t k = 0; k < K; ++k) {
    x[k] = lo + h * static_cast<double>(k);
    f[k] = stick_logdensity(x[k], t, alpha);
    if (!std::isfinite(f[k])) return false;
  }
  double sl[K - 1];
  for (std::size_t k = 0; k + 1 < K; ++k) {
    sl[k] = (f[k + 1] - f[k]) / h;
    if (k > 0 && sl[k] > sl[k - 1] + 1e-9 * (1.0 + std::abs(sl[k - 1]))) return false;
  }

  // segment k is covered by the line through x[k] with the slope of the chord
  // to its left (segment 0 by the extension of the chord on [x1, x2])
  double a0[K - 1], b0[K - 1], lm[K - 1];
  for (std::size_t k = 0; k + 1 < K; ++k) {
    if (k == 0) {
      b0[k] = sl[1];
      a0[k] = f[1] + b0[k] * (x[0] - x[1]);
    } else {
      b0[k] = sl[k - 1];
      a0[k] = f[k];
    }
    const double bh = b0[k] * h;
    if (std::abs(bh) < 1e-10)
      lm[k] = a0[k] + std::log(h);
    else if (bh > 0.0)
      lm[k] = a0[k] + bh + std::log1p(-std::exp(-bh)) - std::log(b0[k]);
    else
      lm[k] = a0[k] + std::log1p(-std::exp(bh)) - std::log(-b0[k]);
    if (!std::isfinite(lm[k])) return false;
  }

  std::vector<double> logmass(lm, lm + (K - 1));
  for (int attempt = 0; attempt < 64; ++attempt) {
    const std::size_t k = rng.categorical_log(logmass);
    const double uu = rng.uniform_pos();
    const double bh = b0[k] * h;
    double y;
    if (std::abs(bh) < 1e-10)
      y = uu * h;
    else
      y = std::log1p(uu * std::expm1(bh)) / b0[k];
    y = std::min(std::max(y, 0.0), h);
    const double cand = x[k] + y;
    const double env = a0[k] + b0[k] * y;
    const double acc = stick_logdensity(cand, t, alpha) - env;
    if (std::log(rng.uniform_pos()) < acc) {
      out = cand;
      return true;
    }
  }
  return false;
}

inline void warn_once(std::vector<std::string>* sink, const std::string& msg) {
  if (!sink) return;
  if (std::find(sink->begin(), sink->end(), msg) == sink->end()) sink->push_back(msg);
}

}  // namespace detail

// Draws the next unowned stick below prev. Tries the concave rejection
// sampler first and falls back to the grid when the density is not concave.
inline double sample_stick(double prev, long t, double alpha, Rng& rng) {
  if (!(prev > 4.0 * detail::stick_floor)) throw NumericError("stick interval collapsed");
  const double hi = std::min(prev, 1.0) * (1.0 - 1e-12);
  double out;
  if (detail::sample_stick_concave(hi, t, alpha, rng, out)) return out;
  return detail::sample_stick_grid(hi, t, alpha, rng);
}

// ---------------------------------------------------------------------------
// slice representation

struct SliceState {
  ClusterState clusters;  // hstar is T x (m_plus + m_zero)
  BinaryMatrix Q;         // (m_plus + m_zero) x L
  RateParams rates;
  std::vector<double> p;  // owned machines first, then the decreasing unowned tail
  double alpha1 = 1.0;
  double s = 0.0;          // slice level
  std::size_t m_plus = 0;  // machines owned by at least one cluster
  std::size_t m_zero = 0;  // represented unowned machines

  std::size_t m_rep() const { return m_plus + m_zero; }
};

// Hard cap on represented machines so the owned feature matrix can always
// satisfy the identifiability constraints.
inline std::size_t slice_machine_budget(std::size_t L) { return (L - 1) / 2; }

// Drops machines no cluster owns, keeping the relative order of the rest.
inline void drop_unowned_machines(SliceState& st) {
  const std::size_t M = st.p.size();
  std::vector<std::size_t> keep;
  for (std::size_t m = 0; m < M; ++m)
    if (st.clusters.hstar.col_sum(m) > 0) keep.push_back(m);
  if (keep.size() != M) {
    st.clusters.hstar = st.clusters.hstar.select_cols(keep);
    st.Q = st.Q.select_rows(keep);
    std::vector<double> np(keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) np[k] = st.p[keep[k]];
    st.p = std::move(np);
  }
  st.m_plus = keep.size();
  st.m_zero = 0;
}

inline SliceState init_slice_state(const BinaryMatrix& Y, const SamplerConfig& cfg, Rng& rng) {
  SamplerState base = init_state(Y, cfg, rng);
  SliceState st;
  st.clusters = std::move(base.clusters);
  st.Q = std::move(base.Q);
  st.rates = std::move(base.rates);
  st.p = std::move(base.p);
  st.alpha1 = base.alpha1;
  st.s = 0.0;
  drop_unowned_machines(st);
  return st;
}

// Elementwise ownership update under the slice representation (union rule
// only; enforced by SamplerConfig::validate). Flipping one ownership bit
// changes the owned-machine set, so each two-point conditional carries the
// reciprocal of the smallest owned weight alongside the Bernoulli prior and
// the likelihood over the machine's feature support.
//
// Machines are visited in weight order, not storage order. Storage order
// tracks ownership (owned block first), so scanning it would let the sweep
// order depend on the bits being resampled, which biases the owned-machine
// count upward; weight order is fixed for the whole scan.
inline void update_Hstar_slice(ClusterState& state, const BinaryMatrix& Q, const RateParams& rates,
                               const std::vector<double>& p, double s, bool prior_only, Rng& rng) {
  const std::size_t T = state.n_clusters(), M = Q.rows(), L = Q.cols();

  // machines under the slice level cannot be owned
  for (std::size_t m = 0; m < M; ++m) {
    if (p[m] >= s) continue;
    for (std::size_t j = 0; j < T; ++j) state.hstar(j, m) = 0;
  }

  std::vector<long> owners(M, 0);
  std::vector<std::vector<std::size_t>> supp(M);
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t j = 0; j < T; ++j) owners[m] += state.hstar(j, m);
    for (std::size_t l = 0; l < L; ++l)
      if (Q(m, l)) supp[m].push_back(l);
  }
  std::vector<std::vector<std::size_t>> cjl(T, std::vector<std::size_t>(L, 0));
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t j = 0; j < T; ++j)
      if (state.hstar(j, m))
        for (std::size_t l : supp[m]) ++cjl[j][l];

  std::vector<double> term1, term0;
  if (!prior_only) {
    term1.resize(T * L);
    term0.resize(T * L);
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
  }

  std::vector<std::size_t> scan(M);
  std::iota(scan.begin(), scan.end(), std::size_t{0});
  std::sort(scan.begin(), scan.end(),
            [&p](std::size_t a, std::size_t b) { return p[a] > p[b]; });

  for (std::size_t j = 0; j < T; ++j) {
    for (std::size_t m : scan) {
      if (p[m] < s) continue;
      const Bit cur = state.hstar(j, m);
      const long others = owners[m] - cur;
      double pmin_other = 2.0;
      for (std::size_t k = 0; k < M; ++k) {
        if (k == m || owners[k] == 0) continue;
        pmin_other = std::min(pmin_other, p[k]);
      }
      double w[2];
      for (int v = 0; v < 2; ++v) {
        double pmin = pmin_other;
        if (others + v > 0) pmin = std::min(pmin, p[m]);
        if (pmin > 1.0) pmin = 1.0;  // nothing owned anywhere
        double lw = pmin >= s ? -std::log(pmin) : neg_inf;
        lw += v ? std::log(p[m]) : std::log1p(-p[m]);
        if (!prior_only && lw != neg_inf) {
          double acc = 0.0;
          for (std::size_t l : supp[m]) {
            const std::size_t cj = cjl[j][l] - static_cast<std::size_t>(cur) +
                                   static_cast<std::size_t>(v);
            acc += cj > 0 ? term1[j * L + l] : term0[j * L + l];
          }
          lw += acc;
        }
        w[v] = lw;
      }
      Bit nv;
      if (w[1] == neg_inf)
        nv = 0;
      else if (w[0] == neg_inf)
        nv = 1;
      else
        nv = rng.uniform() < 1.0 / (1.0 + std::exp(w[0] - w[1])) ? 1 : 0;
      if (nv == cur) continue;
      state.hstar(j, m) = nv;
      owners[m] += nv ? 1 : -1;
      for (std::size_t l : supp[m]) {
        if (nv)
          ++cjl[j][l];
        else
          --cjl[j][l];
      }
    }
  }
}

// Conjugate refresh of the owned machines' weights; returns their minimum.
// Drawn jointly with the slice level that follows: with the level integrated
// out the weights are plain unconstrained betas, and the fresh level then
// lands below all of them.
inline double update_owned_weights(SliceState& st, Rng& rng) {
  const double T = static_cast<double>(st.clusters.n_clusters());
  double pmin = 1.0;
  for (std::size_t m = 0; m < st.m_plus; ++m) {
    const double sm = static_cast<double>(st.clusters.hstar.col_sum(m));
    double w = rng.beta(sm, 1.0 + T - sm);
    w = std::min(std::max(w, detail::stick_floor), 1.0 - 1e-12);
    st.p[m] = w;
    pmin = std::min(pmin, w);
  }
  return pmin;
}

// Helper state for cluster-creating moves under the slice representation.
// Creating a cluster adds one ownership row to the atom field, which carries
// two factors on top of the partition prior and the collapsed likelihood:
//   - a row-count penalty exp(-alpha * int_0^s (1-u)^t du) from the atoms
//     hidden under the slice level, which must stay unowned;
//   - the expected drop of the smallest owned weight when the new row adopts
//     a currently unowned machine lying below it, since the slice level's
//     density is the reciprocal of that minimum.
// The same weights drive the draw of the new row itself: the categorical
// picks which sub-minimum machine becomes the new smallest owned weight (or
// none), machines above it keep independent Bernoulli ownership.
struct NewRowLaw {
  double log_phi = 0.0;                     // row-count penalty
  double log_e = 0.0;                       // E[ pmin_old / pmin_new ]
  double pmin_owned = 1.0;
  std::vector<std::size_t> sub;             // unowned machines below pmin, ascending weight
  std::vector<double> pick_logw;            // [none, sub[0] smallest, sub[1] smallest, ...]
};

inline NewRowLaw new_row_law(const SliceState& st, long t_after) {
  NewRowLaw law;
  const std::size_t M = st.p.size();
  const BinaryMatrix& h = st.clusters.hstar;
  std::vector<bool> owned(M, false);
  for (std::size_t m = 0; m < M; ++m) {
    owned[m] = h.col_sum(m) > 0;
    if (owned[m]) law.pmin_owned = std::min(law.pmin_owned, st.p[m]);
  }
  for (std::size_t m = 0; m < M; ++m)
    if (!owned[m] && st.p[m] >= st.s && st.p[m] < law.pmin_owned) law.sub.push_back(m);
  std::sort(law.sub.begin(), law.sub.end(),
            [&st](std::size_t a, std::size_t b) { return st.p[a] < st.p[b]; });

  law.pick_logw.assign(law.sub.size() + 1, 0.0);
  double pref = 0.0;
  for (std::size_t k = 0; k < law.sub.size(); ++k) {
    law.pick_logw[k + 1] = pref + std::log(law.pmin_owned);
    pref += std::log1p(-st.p[law.sub[k]]);
  }
  law.pick_logw[0] = pref;
  law.log_e = log_sum_exp(law.pick_logw);

  const double tp1 = static_cast<double>(t_after);
  law.log_phi = -st.alpha1 * (1.0 - std::pow(1.0 - st.s, tp1)) / tp1;
  return law;
}

// Fills a freshly appended all-zero ownership row from the law above.
inline void draw_new_row(SliceState& st, std::size_t row, const NewRowLaw& law, Rng& rng) {
  BinaryMatrix& h = st.clusters.hstar;
  const std::size_t M = st.p.size();
  std::vector<bool> in_sub(M, false);
  for (std::size_t m : law.sub) in_sub[m] = true;
  const std::size_t pick = rng.categorical_log(law.pick_logw);
  for (std::size_t k = 0; k < law.sub.size(); ++k) {
    Bit b = 0;
    if (pick >= 1) {
      if (k + 1 == pick) b = 1;
      else if (k + 1 > pick) b = rng.bernoulli(st.p[law.sub[k]]) ? 1 : 0;
    }
    h(row, law.sub[k]) = b;
  }
  for (std::size_t m = 0; m < M; ++m) {
    if (in_sub[m] || st.p[m] < st.s) continue;
    h(row, m) = rng.bernoulli(st.p[m]) ? 1 : 0;
  }
}

// Collapsed Gibbs over must-link units under the slice representation.
// Mirrors the finite-mode sweep, with the cluster-creating candidate weighted
// by the two slice factors and the created row drawn from its conditional
// instead of starting empty.
inline void gibbs_update_Z_slice(SliceState& st, const StateBlocks& blocks,
                                 const PartitionPrior& prior, const MustLinkUnits& units,
                                 Rule rule, std::size_t block_cap, bool prior_only,
                                 const std::vector<double>& peff, Rng& rng) {
  ClusterState& state = st.clusters;
  const BinaryMatrix& Q = st.Q;
  const RateParams& rates = st.rates;
  const long N = static_cast<long>(state.z.size());
  const double gam = prior.gamma();

  std::vector<double> logg(state.n_clusters());
  for (std::size_t j = 0; j < logg.size(); ++j)
    logg[j] = cluster_g(state.counts[j], Q, blocks, rates, peff, rule, block_cap, prior_only);

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
      logg[jcur] = cluster_g(state.counts[jcur], Q, blocks, rates, peff, rule, block_cap, prior_only);
    }

    const long t = static_cast<long>(state.n_clusters());
    const NewRowLaw law = new_row_law(st, t + 1);

    std::vector<double> w(static_cast<std::size_t>(t) + 1);
    std::vector<double> cand(static_cast<std::size_t>(t));
    for (long c = 0; c < t; ++c) {
      auto& cc = state.counts[static_cast<std::size_t>(c)];
      const double asc = log_ascending(gam + static_cast<double>(cc.size), b);
      cc.add(ucounts);
      cand[static_cast<std::size_t>(c)] =
          cluster_g(cc, Q, blocks, rates, peff, rule, block_cap, prior_only);
      cc.subtract(ucounts);
      w[static_cast<std::size_t>(c)] =
          asc + cand[static_cast<std::size_t>(c)] - logg[static_cast<std::size_t>(c)];
    }
    const double gunit = cluster_g(ucounts, Q, blocks, rates, peff, rule, block_cap, prior_only);
    w[static_cast<std::size_t>(t)] = log_ascending(gam, b) + prior.log_Vn(t + 1, N) -
                                     prior.log_Vn(t, N) + gunit + law.log_phi + law.log_e;

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
      draw_new_row(st, state.n_clusters() - 1, law, rng);
      logg.push_back(gunit);
    }
  }
}

inline void slice_sampler_step(SliceState& st, const BinaryMatrix& Y, const SamplerConfig& cfg,
                               const PartitionPrior& prior, const RatePrior& rate_prior,
                               const MustLinkUnits& units, const std::vector<double>& ybar,
                               Rng& rng, std::vector<std::string>* warnings) {
  // partition sweep; machines under the slice cannot enter any marginal
  std::vector<double> peff = st.p;
  for (double& w : peff)
    if (w < st.s) w = 0.0;
  StateBlocks blocks = rcm_state_blocks(st.Q);
  gibbs_update_Z_slice(st, blocks, prior, units, cfg.rule, cfg.block_cap, cfg.prior_only, peff,
                       rng);

  update_Hstar_slice(st.clusters, st.Q, st.rates, st.p, st.s, cfg.prior_only, rng);

  // keep owned machines only, then refresh their feature rows and the rates
  drop_unowned_machines(st);
  update_Q(st.Q, st.clusters, st.rates, cfg.rule, rng);
  if (!cfg.fix_rates) update_rates(st.rates, st.clusters, st.Q, rate_prior, cfg.rule, rng, warnings);

  const double pmin = update_owned_weights(st, rng);
  st.s = pmin * rng.uniform_pos();

  // regenerate the unowned tail down to the new slice level
  const std::size_t budget = slice_machine_budget(Y.cols());
  const long T = static_cast<long>(st.clusters.n_clusters());
  std::vector<double> tail;
  double prev = 1.0;
  int failures = 0;
  while (true) {
    if (st.m_plus + tail.size() >= budget) {
      detail::warn_once(warnings, "machine budget reached; unowned tail truncated");
      break;
    }
    double w;
    try {
      w = sample_stick(prev, T, st.alpha1, rng);
    } catch (const NumericError& e) {
      if (++failures >= 3) {
        detail::warn_once(warnings, std::string("unowned-tail sampler gave up: ") + e.what());
        break;
      }
      continue;
    }
    if (w < st.s) break;
    tail.push_back(w);
    prev = w;
  }

  // represent the new tail: zero ownership, freshly seeded feature rows
  std::vector<double> kept;
  for (double w : tail) {
    st.Q.append_zero_row();
    if (!reseed_unused_row(st.Q, st.Q.rows() - 1, ybar, cfg.p_init, cfg.tau1, rng)) {
      st.Q.pop_row();
      detail::warn_once(warnings, "no free columns to seed a feature row; unowned tail truncated");
      break;
    }
    kept.push_back(w);
  }
  if (!kept.empty()) {
    st.clusters.hstar = st.clusters.hstar.with_appended_zero_cols(kept.size());
    st.p.insert(st.p.end(), kept.begin(), kept.end());
  }
  st.m_zero = kept.size();

  if (!cfg.fix_alpha1 && st.m_rep() > 0)
    st.alpha1 = update_alpha1(st.clusters.hstar, cfg.a_beta, cfg.b_beta, cfg.alpha2,
                              cfg.alpha_grid_points, rng);
}

// Recorded draws carry the owned machines only; the unowned tail is
// representation bookkeeping.
inline Draw record_slice_draw(const SliceState& st, const BinaryMatrix& Y,
                              const SamplerConfig& cfg, const PartitionPrior& prior,
                              const RatePrior& rate_prior, long iter) {
  std::vector<std::size_t> owned(st.m_plus);
  std::iota(owned.begin(), owned.end(), std::size_t{0});
  SamplerState view;
  view.clusters = st.clusters;
  view.clusters.hstar = st.clusters.hstar.select_cols(owned);
  view.Q = st.Q.select_rows(owned);
  view.rates = st.rates;
  view.p.assign(st.p.begin(), st.p.begin() + static_cast<std::ptrdiff_t>(st.m_plus));
  view.alpha1 = st.alpha1;
  return record_draw(view, Y, cfg, prior, rate_prior, iter);
}

inline ChainOutput run_slice_chain(const BinaryMatrix& Y, const SamplerConfig& cfg,
                                   long chain_index) {
  cfg.validate();
  if (cfg.mode != SamplerMode::infinite)
    throw ConfigError("run_slice_chain needs mode=infinite");
  Rng rng = Rng::substream(cfg.seed, static_cast<std::uint64_t>(chain_index));

  ChainOutput out;
  out.chain_index = chain_index;
  out.master_seed = cfg.seed;
  out.config = cfg;
  out.n = Y.rows();
  out.l = Y.cols();

  SliceState st = init_slice_state(Y, cfg, rng);
  const PartitionPrior prior = cfg.partition_prior();
  const RatePrior rate_prior = cfg.rate_prior(Y.cols());
  const MustLinkUnits units = MustLinkUnits::build(Y, cfg.partial_clusters);
  const std::vector<double> ybar = column_means(Y);

  for (long iter = 1; iter <= cfg.iterations; ++iter) {
    slice_sampler_step(st, Y, cfg, prior, rate_prior, units, ybar, rng, &out.warnings);
    if (iter > cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0)
      out.draws.push_back(record_slice_draw(st, Y, cfg, prior, rate_prior, iter));
  }
  return out;
}

inline ChainOutput run_model_chain(const BinaryMatrix& Y, const SamplerConfig& cfg,
                                   long chain_index) {
  return cfg.mode == SamplerMode::infinite ? run_slice_chain(Y, cfg, chain_index)
                                           : run_chain(Y, cfg, chain_index);
}

inline std::vector<ChainOutput> run_model_chains(const BinaryMatrix& Y, const SamplerConfig& cfg) {
  std::vector<ChainOutput> out;
  for (long c = 0; c < cfg.chains; ++c) out.push_back(run_model_chain(Y, cfg, c));
  return out;
}

}  // namespace rlcm
