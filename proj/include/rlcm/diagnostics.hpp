#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rlcm/errors.hpp"
#include "rlcm/sampler.hpp"

namespace rlcm {

// ---------------------------------------------------------------------------
// potential scale reduction

struct PsrfResult {
  double rhat = 1.0;
  bool flagged = false;     // rhat > 1.1
  bool degenerate = false;  // every chain constant at the same value
};

// Between/within variance ratio over >= 2 chains of equal length. Chains that
// are each constant but disagree have zero within-variance and infinite rhat;
// fully constant input reports 1 with a warning instead of dividing by zero.
inline PsrfResult gelman_rubin(const std::vector<std::vector<double>>& chains,
                               std::vector<std::string>* warnings = nullptr) {
  const std::size_t m = chains.size();
  if (m < 2) throw DataError("gelman_rubin needs at least two chains");
  const std::size_t n = chains.front().size();
  if (n < 10) throw DataError("gelman_rubin needs at least 10 draws per chain");
  for (const auto& c : chains)
    if (c.size() != n) throw DataError("gelman_rubin chains must have equal length");

  std::vector<double> means(m);
  double grand = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    double s = 0.0;
    for (double v : chains[c]) s += v;
    means[c] = s / static_cast<double>(n);
    grand += means[c];
  }
  grand /= static_cast<double>(m);

  double B = 0.0;
  for (double mu : means) B += (mu - grand) * (mu - grand);
  B *= static_cast<double>(n) / static_cast<double>(m - 1);

  double W = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    double ss = 0.0;
    for (double v : chains[c]) ss += (v - means[c]) * (v - means[c]);
    W += ss / static_cast<double>(n - 1);
  }
  W /= static_cast<double>(m);

  PsrfResult out;
  if (W <= 0.0) {
    if (B <= 0.0) {
      out.rhat = 1.0;
      out.degenerate = true;
      if (warnings)
        warnings->push_back("gelman_rubin: constant traces; scale reduction reported as 1");
    } else {
      out.rhat = std::numeric_limits<double>::infinity();
      out.flagged = true;
    }
    return out;
  }
  const double varp =
      (static_cast<double>(n) - 1.0) / static_cast<double>(n) * W + B / static_cast<double>(n);
  out.rhat = std::sqrt(varp / W);
  out.flagged = out.rhat > 1.1;
  return out;
}

// ---------------------------------------------------------------------------
// Geweke window comparison

namespace detail {

// Bartlett-window spectral variance at frequency zero, biased autocovariances,
// lag cutoff 4% of the segment length.
inline double spectral_var0(const double* x, std::size_t n) {
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i];
  mean /= static_cast<double>(n);
  const std::size_t W = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                     std::floor(0.04 * static_cast<double>(n))));
  double g0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) g0 += (x[i] - mean) * (x[i] - mean);
  g0 /= static_cast<double>(n);
  double s = g0;
  for (std::size_t k = 1; k <= W && k < n; ++k) {
    double gk = 0.0;
    for (std::size_t i = k; i < n; ++i) gk += (x[i] - mean) * (x[i - k] - mean);
    gk /= static_cast<double>(n);
    s += 2.0 * (1.0 - static_cast<double>(k) / (static_cast<double>(W) + 1.0)) * gk;
  }
  return s;
}

}  // namespace detail

struct GewekeResult {
  double z = 0.0;
  bool flagged = false;     // |z| > 2, or undefined
  bool degenerate = false;  // a window had no spectral variance
};

// Mean of the first 10% of the trace against the mean of the last 50%,
// standardized by spectral variance estimates of each window.
inline GewekeResult geweke(const std::vector<double>& trace) {
  const std::size_t n = trace.size();
  if (n < 100) throw DataError("geweke needs at least 100 draws");
  const std::size_t na = static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(n)));
  const std::size_t nb = static_cast<std::size_t>(std::floor(0.5 * static_cast<double>(n)));
  const double* a = trace.data();
  const double* b = trace.data() + (n - nb);

  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < na; ++i) ma += a[i];
  for (std::size_t i = 0; i < nb; ++i) mb += b[i];
  ma /= static_cast<double>(na);
  mb /= static_cast<double>(nb);

  const double sa = detail::spectral_var0(a, na);
  const double sb = detail::spectral_var0(b, nb);

  GewekeResult out;
  if (sa <= 0.0 || sb <= 0.0) {
    out.z = std::numeric_limits<double>::quiet_NaN();
    out.flagged = true;
    out.degenerate = true;
    return out;
  }
  out.z = (ma - mb) / std::sqrt(sa / static_cast<double>(na) + sb / static_cast<double>(nb));
  out.flagged = std::abs(out.z) > 2.0;
  return out;
}

// ---------------------------------------------------------------------------
// posterior predictive replication

// One replicate dataset from the measurement model at a single draw's
// parameters: subject i inherits the state row of its cluster, the ideal
// response comes from the drawn design matrix, and each cell flips on with
// the true- or false-positive rate of its feature.
inline BinaryMatrix ppc_replicate(const Draw& draw, std::size_t N, std::size_t L, Rule rule,
                                  Rng& rng) {
  if (draw.z.size() != N) throw DataError("ppc_replicate: partition length disagrees with N");
  if (draw.theta.size() != L || draw.psi.size() != L)
    throw DataError("ppc_replicate: rate length disagrees with L");
  if (draw.q.cols() != L || draw.q.rows() != draw.hstar.cols())
    throw DataError("ppc_replicate: design matrix shape mismatch");

  BinaryMatrix rep(N, L);
  std::vector<Bit> gam(L);
  for (std::size_t i = 0; i < N; ++i) {
    const Bit* eta = draw.hstar.row(static_cast<std::size_t>(draw.z[i]));
    gamma_row_into(eta, draw.q, rule, gam.data());
    for (std::size_t l = 0; l < L; ++l) {
      const double lam = gam[l] ? draw.theta[l] : draw.psi[l];
      rep(i, l) = rng.bernoulli(lam) ? 1 : 0;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// pairwise log odds ratios

struct LorMatrix {
  std::size_t l = 0;
  std::vector<double> lor, se;  // row-major l x l, symmetric, zero diagonal

  double lor_at(std::size_t a, std::size_t b) const { return lor[a * l + b]; }
  double se_at(std::size_t a, std::size_t b) const { return se[a * l + b]; }
};

// Haldane-corrected log odds ratio and its standard error for every feature
// pair: all four 2x2 cells get +1/2 before the ratio.
inline LorMatrix pairwise_lor(const BinaryMatrix& Y) {
  const std::size_t N = Y.rows(), L = Y.cols();
  if (N < 2) throw DataError("pairwise_lor needs at least two rows");
  LorMatrix out;
  out.l = L;
  out.lor.assign(L * L, 0.0);
  out.se.assign(L * L, 0.0);
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = a + 1; b < L; ++b) {
      double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
      for (std::size_t i = 0; i < N; ++i) {
        const bool ya = Y(i, a), yb = Y(i, b);
        if (ya && yb)
          ++n11;
        else if (ya)
          ++n10;
        else if (yb)
          ++n01;
        else
          ++n00;
      }
      const double lor =
          std::log((n11 + 0.5) * (n00 + 0.5) / ((n10 + 0.5) * (n01 + 0.5)));
      const double se = std::sqrt(1.0 / (n11 + 0.5) + 1.0 / (n10 + 0.5) + 1.0 / (n01 + 0.5) +
                                  1.0 / (n00 + 0.5));
      out.lor[a * L + b] = out.lor[b * L + a] = lor;
      out.se[a * L + b] = out.se[b * L + a] = se;
    }
  return out;
}

// ---------------------------------------------------------------------------
// predictive interval / discrepancy report

struct PpcPairStats {
  std::vector<double> obs, lo, hi, mean, sd, slord, ppp;
  std::vector<char> inside;         // obs within [lo, hi]
  std::vector<char> slord_flagged;  // |slord| > 2 or predictive sd = 0
  double coverage = 0.0;
};

namespace detail {

inline double quantile_nearest_rank(const std::vector<double>& sorted, double q) {
  const std::size_t R = sorted.size();
  double r = std::ceil(q * static_cast<double>(R));
  if (r < 1.0) r = 1.0;
  if (r > static_cast<double>(R)) r = static_cast<double>(R);
  return sorted[static_cast<std::size_t>(r) - 1];
}

}  // namespace detail

// Per-statistic predictive summary: central 95% interval by nearest-rank
// quantiles, standardized discrepancy against the predictive spread, and
// the lower-tail predictive probability P(rep < obs).
inline PpcPairStats ppc_pair_stats(const std::vector<double>& obs,
                                   const std::vector<std::vector<double>>& reps) {
  const std::size_t K = obs.size();
  if (reps.size() != K) throw DataError("ppc_pair_stats: statistic count mismatch");
  PpcPairStats out;
  out.obs = obs;
  out.lo.resize(K);
  out.hi.resize(K);
  out.mean.resize(K);
  out.sd.resize(K);
  out.slord.resize(K);
  out.ppp.resize(K);
  out.inside.resize(K);
  out.slord_flagged.resize(K);
  std::size_t covered = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const std::vector<double>& r = reps[k];
    const std::size_t R = r.size();
    if (R < 100) throw DataError("ppc_pair_stats needs at least 100 replicates");
    std::vector<double> sorted = r;
    std::sort(sorted.begin(), sorted.end());
    out.lo[k] = detail::quantile_nearest_rank(sorted, 0.025);
    out.hi[k] = detail::quantile_nearest_rank(sorted, 0.975);

    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(R);
    double ss = 0.0;
    std::size_t below = 0;
    for (double v : r) {
      ss += (v - mean) * (v - mean);
      if (v < obs[k]) ++below;
    }
    const double sd = std::sqrt(ss / static_cast<double>(R - 1));
    out.mean[k] = mean;
    out.sd[k] = sd;
    out.ppp[k] = static_cast<double>(below) / static_cast<double>(R);
    if (sd > 0.0) {
      out.slord[k] = (obs[k] - mean) / sd;
      out.slord_flagged[k] = std::abs(out.slord[k]) > 2.0 ? 1 : 0;
    } else {
      out.slord[k] = std::numeric_limits<double>::quiet_NaN();
      out.slord_flagged[k] = 1;
    }
    out.inside[k] = (obs[k] >= out.lo[k] && obs[k] <= out.hi[k]) ? 1 : 0;
    if (out.inside[k]) ++covered;
  }
  out.coverage = K == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(K);
  return out;
}

struct PpcReport {
  std::size_t l = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // a < b feature pairs
  PpcPairStats stats;
};

// Pairwise-LOR predictive check: observed LORs of Y against the replicate
// LOR distribution, one statistic per unordered feature pair.
inline PpcReport ppci_and_slord(const BinaryMatrix& Y, const std::vector<LorMatrix>& rep_lors) {
  if (rep_lors.size() < 100) throw DataError("ppci_and_slord needs at least 100 replicates");
  const std::size_t L = Y.cols();
  const LorMatrix obs = pairwise_lor(Y);
  PpcReport out;
  out.l = L;
  std::vector<double> obs_v;
  std::vector<std::vector<double>> reps;
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = a + 1; b < L; ++b) {
      out.pairs.emplace_back(a, b);
      obs_v.push_back(obs.lor_at(a, b));
      std::vector<double> col(rep_lors.size());
      for (std::size_t r = 0; r < rep_lors.size(); ++r) {
        if (rep_lors[r].l != L) throw DataError("ppci_and_slord: replicate width mismatch");
        col[r] = rep_lors[r].lor_at(a, b);
      }
      reps.push_back(std::move(col));
    }
  out.stats = ppc_pair_stats(obs_v, reps);
  return out;
}

// Marginal-mean predictive check: per-feature observed means of Y against the
// replicate mean distribution, one statistic per feature.
inline PpcPairStats ppci_means(const BinaryMatrix& Y, const std::vector<BinaryMatrix>& reps) {
  if (reps.size() < 100) throw DataError("ppci_means needs at least 100 replicates");
  const std::size_t N = Y.rows(), L = Y.cols();
  if (N == 0) throw DataError("ppci_means: empty data");
  const auto col_means = [](const BinaryMatrix& A) {
    std::vector<double> mu(A.cols(), 0.0);
    for (std::size_t i = 0; i < A.rows(); ++i)
      for (std::size_t l = 0; l < A.cols(); ++l) mu[l] += A(i, l);
    for (double& v : mu) v /= static_cast<double>(A.rows());
    return mu;
  };
  const std::vector<double> obs = col_means(Y);
  std::vector<std::vector<double>> r(L, std::vector<double>(reps.size()));
  for (std::size_t k = 0; k < reps.size(); ++k) {
    if (reps[k].rows() != N || reps[k].cols() != L)
      throw DataError("ppci_means: replicate shape mismatch");
    const std::vector<double> mu = col_means(reps[k]);
    for (std::size_t l = 0; l < L; ++l) r[l][k] = mu[l];
  }
  return ppc_pair_stats(obs, r);
}

// ---------------------------------------------------------------------------
// adjusted Rand index

// Chance-corrected pairwise agreement between two partitions of the same
// subjects; 1 for identical partitions, near 0 for unrelated ones.
inline double adjusted_rand_index(const std::vector<int>& za, const std::vector<int>& zb) {
  const std::size_t N = za.size();
  if (N == 0) throw DataError("adjusted_rand_index needs a nonempty partition");
  if (zb.size() != N) throw DataError("adjusted_rand_index: partitions differ in length");

  auto compact = [](const std::vector<int>& z) {
    std::vector<int> out(z.size());
    std::unordered_map<int, int> seen;
    for (std::size_t i = 0; i < z.size(); ++i) {
      auto it = seen.find(z[i]);
      if (it == seen.end()) it = seen.emplace(z[i], static_cast<int>(seen.size())).first;
      out[i] = it->second;
    }
    return out;
  };
  const std::vector<int> a = compact(za), b = compact(zb);
  int ka = 1 + *std::max_element(a.begin(), a.end());
  int kb = 1 + *std::max_element(b.begin(), b.end());

  std::vector<double> table(static_cast<std::size_t>(ka) * static_cast<std::size_t>(kb), 0.0);
  std::vector<double> ra(static_cast<std::size_t>(ka), 0.0), cb(static_cast<std::size_t>(kb), 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    table[static_cast<std::size_t>(a[i]) * static_cast<std::size_t>(kb) +
          static_cast<std::size_t>(b[i])] += 1.0;
    ra[static_cast<std::size_t>(a[i])] += 1.0;
    cb[static_cast<std::size_t>(b[i])] += 1.0;
  }
  auto choose2 = [](double x) { return 0.5 * x * (x - 1.0); };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (double v : table) sum_ij += choose2(v);
  for (double v : ra) sum_a += choose2(v);
  for (double v : cb) sum_b += choose2(v);
  const double total = choose2(static_cast<double>(N));
  if (total == 0.0) return 1.0;  // single subject: partitions trivially agree
  const double expected = sum_a * sum_b / total;
  const double maxidx = 0.5 * (sum_a + sum_b);
  if (maxidx - expected == 0.0) return sum_ij - expected == 0.0 ? 1.0 : 0.0;
  return (sum_ij - expected) / (maxidx - expected);
}

// ---------------------------------------------------------------------------
// convergence table over the monitored scalar traces

struct ConvergenceRow {
  std::string name;
  double rhat = std::numeric_limits<double>::quiet_NaN();
  bool rhat_flagged = false;
  double z = std::numeric_limits<double>::quiet_NaN();  // worst |z| across chains
  bool z_flagged = false;
};

namespace detail {

inline std::vector<std::vector<double>> trace_of(
    const std::vector<ChainOutput>& chains, const std::function<double(const Draw&)>& f) {
  std::vector<std::vector<double>> out;
  for (const ChainOutput& c : chains) {
    std::vector<double> t;
    t.reserve(c.draws.size());
    for (const Draw& d : c.draws) t.push_back(f(d));
    out.push_back(std::move(t));
  }
  return out;
}

inline ConvergenceRow convergence_row(std::string name,
                                      const std::vector<std::vector<double>>& traces,
                                      std::vector<std::string>* warnings) {
  ConvergenceRow row;
  row.name = std::move(name);
  std::size_t shortest = traces.empty() ? 0 : traces.front().size();
  for (const auto& t : traces) shortest = std::min(shortest, t.size());
  if (traces.size() >= 2 && shortest >= 10) {
    std::vector<std::vector<double>> clipped;
    for (const auto& t : traces) clipped.emplace_back(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(shortest));
    const PsrfResult r = gelman_rubin(clipped, warnings);
    row.rhat = r.rhat;
    row.rhat_flagged = r.flagged;
  }
  double worst = -1.0;
  bool flagged = false, any = false;
  for (const auto& t : traces) {
    if (t.size() < 100) continue;
    const GewekeResult g = geweke(t);
    any = true;
    if (std::isnan(g.z)) {
      flagged = flagged || g.flagged;
      continue;
    }
    if (std::abs(g.z) > worst) worst = std::abs(g.z);
    flagged = flagged || g.flagged;
  }
  if (any && worst >= 0.0) row.z = worst;
  row.z_flagged = flagged;
  return row;
}

}  // namespace detail

// One diagnostic row per monitored scalar: joint log density, each feature's
// true- and false-positive rate, the state-prior weight, and the
// scientific-cluster count.
inline std::vector<ConvergenceRow> convergence_table(const std::vector<ChainOutput>& chains,
                                                     std::vector<std::string>* warnings = nullptr) {
  if (chains.empty()) throw DataError("convergence_table needs at least one chain");
  const std::size_t L = chains.front().l;
  std::vector<ConvergenceRow> rows;
  rows.push_back(detail::convergence_row(
      "log_posterior", detail::trace_of(chains, [](const Draw& d) { return d.logpost; }),
      warnings));
  rows.push_back(detail::convergence_row(
      "alpha1", detail::trace_of(chains, [](const Draw& d) { return d.alpha1; }), warnings));
  rows.push_back(detail::convergence_row(
      "t_tilde",
      detail::trace_of(chains, [](const Draw& d) { return static_cast<double>(d.t_tilde); }),
      warnings));
  for (std::size_t l = 0; l < L; ++l) {
    rows.push_back(detail::convergence_row(
        "theta_" + std::to_string(l),
        detail::trace_of(chains, [l](const Draw& d) { return d.theta[l]; }), warnings));
    rows.push_back(detail::convergence_row(
        "psi_" + std::to_string(l),
        detail::trace_of(chains, [l](const Draw& d) { return d.psi[l]; }), warnings));
  }
  return rows;
}

}  // namespace rlcm
