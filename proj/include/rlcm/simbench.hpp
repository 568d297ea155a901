#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "rlcm/diagnostics.hpp"
#include "rlcm/errors.hpp"
#include "rlcm/slice.hpp"
#include "rlcm/summaries.hpp"

namespace rlcm {

// ---------------------------------------------------------------------------
// simulation designs

struct SimDesign {
  std::size_t l = 100, n = 50, m = 3;
  double theta0 = 0.8, psi0 = 0.1;
  std::vector<double> pi0;  // weights over the 2^m state patterns, bit m of the
                            // pattern index is state m
  double s = 0.2;           // design-matrix row density
  long replications = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (m < 1) throw ConfigError("design needs at least one state");
    if (m > 20) throw CapacityError("design pattern space limited to 20 states");
    if (n < 1) throw ConfigError("design needs at least one subject");
    if (2 * m > l) throw ConfigError("design needs 2m <= l features");
    if (!(s > 0.0 && s < 1.0)) throw ConfigError("row density must lie in (0,1)");
    if (!(psi0 >= 0.0 && psi0 < theta0 && theta0 <= 1.0))
      throw ConfigError("design rates need 0 <= psi0 < theta0 <= 1");
    if (replications < 1) throw ConfigError("design needs at least one replication");
    const std::size_t P = std::size_t{1} << m;
    if (pi0.size() != P) throw ConfigError("pattern weights must cover all 2^m patterns");
    double total = 0.0;
    for (double w : pi0) {
      if (w < 0.0) throw ConfigError("pattern weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("pattern weights must sum to one");
  }
};

// Eight-pattern weight vector used by the single-dataset study:
// four patterns at 1/6, four at 1/12.
inline std::vector<double> sim1_pattern_weights() {
  std::vector<double> w(8);
  for (std::size_t a = 0; a < 4; ++a) w[a] = 1.0 / 6.0;
  for (std::size_t a = 4; a < 8; ++a) w[a] = 1.0 / 12.0;
  return w;
}

inline std::vector<double> uniform_pattern_weights(std::size_t m) {
  const std::size_t P = std::size_t{1} << m;
  return std::vector<double>(P, 1.0 / static_cast<double>(P));
}

// Full factorial of the replication-study axes: feature count, sample size,
// true- and false-positive rates, pattern weights, and row density.
inline std::vector<SimDesign> sim2_grid(std::uint64_t seed_base = 1) {
  const std::vector<std::size_t> Ls = {50, 100, 200, 400};
  const std::vector<std::size_t> Ns = {50, 100, 200};
  const std::vector<double> thetas = {0.8, 0.9};
  const std::vector<double> psis = {0.05, 0.15};
  const std::vector<std::vector<double>> pis = {uniform_pattern_weights(3),
                                                sim1_pattern_weights()};
  const std::vector<double> ss = {0.1, 0.2};
  std::vector<SimDesign> grid;
  for (std::size_t L : Ls)
    for (std::size_t N : Ns)
      for (double th : thetas)
        for (double ps : psis)
          for (const auto& pi : pis)
            for (double s : ss) {
              SimDesign d;
              d.l = L;
              d.n = N;
              d.m = 3;
              d.theta0 = th;
              d.psi0 = ps;
              d.pi0 = pi;
              d.s = s;
              d.replications = 60;
              d.seed = seed_base + grid.size();
              grid.push_back(std::move(d));
            }
  return grid;
}

// ---------------------------------------------------------------------------
// generators

// Independent Bernoulli(s) design matrix, repaired into the identifiable set
// by random within-row element swaps. Swaps preserve row sums, so draws whose
// row support cannot satisfy the membership predicate burn the budget and
// fail; callers treat that as a per-replication failure.
inline BinaryMatrix gen_Q(std::size_t M, std::size_t L, double s, Rng& rng) {
  if (2 * M > L) throw ConfigError("gen_Q needs 2M <= L");
  if (!(s > 0.0 && s < 1.0)) throw ConfigError("gen_Q density must lie in (0,1)");
  BinaryMatrix Q(M, L);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t l = 0; l < L; ++l) Q(m, l) = rng.bernoulli(s) ? 1 : 0;
  long budget = 100000;
  while (!q_in_constraint_set(Q)) {
    if (budget-- <= 0) throw CapacityError("gen_Q: swap repair budget exhausted");
    const std::size_t m = static_cast<std::size_t>(rng.uniform_below(M));
    const std::size_t a = static_cast<std::size_t>(rng.uniform_below(L));
    const std::size_t b = static_cast<std::size_t>(rng.uniform_below(L));
    std::swap(Q(m, a), Q(m, b));
  }
  return Q;
}

struct SimData {
  BinaryMatrix y;      // n x l observations
  BinaryMatrix eta;    // n x m latent states per subject
  std::vector<int> z;  // pattern index per subject (the true partition)
};

// Latent states from the pattern distribution, ideal responses by the union
// rule, observations through the two-rate measurement model.
inline SimData gen_data(const SimDesign& d, const BinaryMatrix& Q, Rng& rng) {
  d.validate();
  if (Q.rows() != d.m || Q.cols() != d.l)
    throw DataError("gen_data: design matrix shape disagrees with the design");
  SimData out;
  out.y = BinaryMatrix(d.n, d.l);
  out.eta = BinaryMatrix(d.n, d.m);
  out.z.resize(d.n);
  std::vector<Bit> gam(d.l);
  for (std::size_t i = 0; i < d.n; ++i) {
    const std::size_t a = rng.categorical(d.pi0);
    out.z[i] = static_cast<int>(a);
    for (std::size_t m = 0; m < d.m; ++m) out.eta(i, m) = (a >> m) & 1u;
    gamma_row_into(out.eta.row(i), Q, Rule::dino, gam.data());
    for (std::size_t l = 0; l < d.l; ++l) {
      const double lam = gam[l] ? d.theta0 : d.psi0;
      out.y(i, l) = rng.bernoulli(lam) ? 1 : 0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// baseline: complete-linkage Hamming clustering

// Agglomerative clustering cut at k blocks. Cluster ids are their
// smallest member; merges pick the smallest (distance, id, id) key, so runs
// are deterministic. Labels come out in ascending id order.
inline std::vector<int> hclust_hamming(const BinaryMatrix& Y, std::size_t k) {
  const std::size_t N = Y.rows();
  if (k < 1 || k > N) throw DataError("hclust_hamming needs 1 <= k <= N");
  std::vector<std::vector<double>> dc(N, std::vector<double>(N, 0.0));
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j) {
      std::size_t h = 0;
      for (std::size_t l = 0; l < Y.cols(); ++l)
        if (Y(i, l) != Y(j, l)) ++h;
      dc[i][j] = dc[j][i] = static_cast<double>(h);
    }
  std::vector<char> alive(N, 1);
  std::size_t n_clusters = N;
  while (n_clusters > k) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t lo = 0, hi = 0;
    for (std::size_t a = 0; a < N; ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < N; ++b) {
        if (!alive[b]) continue;
        if (dc[a][b] < best) {
          best = dc[a][b];
          lo = a;
          hi = b;
        }
      }
    }
    for (std::size_t c = 0; c < N; ++c) {
      if (!alive[c] || c == lo || c == hi) continue;
      dc[lo][c] = dc[c][lo] = std::max(dc[lo][c], dc[hi][c]);
    }
    alive[hi] = 0;
    --n_clusters;
    // record hi's members under lo via the label pass below
    dc[hi][hi] = static_cast<double>(lo) + 1.0;  // forward pointer, offset to spare 0
  }
  std::vector<int> labels(N);
  std::vector<int> id_label(N, -1);
  int next = 0;
  for (std::size_t i = 0; i < N; ++i) {
    std::size_t r = i;
    while (!alive[r]) r = static_cast<std::size_t>(dc[r][r] - 1.0);
    if (id_label[r] == -1) id_label[r] = next++;
    labels[i] = id_label[r];
  }
  return labels;
}

// ---------------------------------------------------------------------------
// baseline: unrestricted Bayesian latent class analysis

struct LcaDraw {
  std::vector<int> z;
  std::vector<double> weight;  // K class weights
  std::vector<double> lambda;  // K x L response probabilities, row-major
};

struct LcaOutput {
  std::size_t n = 0, l = 0, k = 0;
  std::vector<LcaDraw> draws;
};

// Gibbs sampler for the unrestricted latent class model: flat Dirichlet class
// weights, flat Beta response probabilities per class and feature.
inline LcaOutput bayesian_lca(const BinaryMatrix& Y, std::size_t K, long iterations,
                              long burn_in, Rng& rng) {
  const std::size_t N = Y.rows(), L = Y.cols();
  if (N == 0 || L == 0) throw DataError("bayesian_lca needs a nonempty data matrix");
  if (K < 1) throw ConfigError("bayesian_lca needs at least one class");
  if (iterations < 0 || burn_in < 0 || burn_in > iterations)
    throw ConfigError("bayesian_lca needs 0 <= burn_in <= iterations");

  LcaOutput out;
  out.n = N;
  out.l = L;
  out.k = K;
  std::vector<int> z(N);
  for (auto& v : z) v = static_cast<int>(rng.uniform_below(K));

  std::vector<double> weight(K), lambda(K * L);
  std::vector<double> logw(K);
  for (long it = 1; it <= iterations; ++it) {
    // class weights and response probabilities given memberships
    std::vector<double> nk(K, 0.0), skl(K * L, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t c = static_cast<std::size_t>(z[i]);
      nk[c] += 1.0;
      const Bit* row = Y.row(i);
      for (std::size_t l = 0; l < L; ++l)
        if (row[l]) skl[c * L + l] += 1.0;
    }
    double wtot = 0.0;
    for (std::size_t c = 0; c < K; ++c) {
      weight[c] = rng.gamma(1.0 + nk[c]);
      wtot += weight[c];
    }
    for (auto& w : weight) w /= wtot;
    for (std::size_t c = 0; c < K; ++c)
      for (std::size_t l = 0; l < L; ++l)
        lambda[c * L + l] = rng.beta(1.0 + skl[c * L + l], 1.0 + nk[c] - skl[c * L + l]);

    // memberships given parameters
    std::vector<double> base(K, 0.0), delta(K * L);
    for (std::size_t c = 0; c < K; ++c) {
      base[c] = std::log(weight[c]);
      for (std::size_t l = 0; l < L; ++l) {
        const double lam = std::min(std::max(lambda[c * L + l], 1e-12), 1.0 - 1e-12);
        base[c] += std::log1p(-lam);
        delta[c * L + l] = std::log(lam) - std::log1p(-lam);
      }
    }
    for (std::size_t i = 0; i < N; ++i) {
      const Bit* row = Y.row(i);
      for (std::size_t c = 0; c < K; ++c) {
        double lw = base[c];
        for (std::size_t l = 0; l < L; ++l)
          if (row[l]) lw += delta[c * L + l];
        logw[c] = lw;
      }
      z[i] = static_cast<int>(rng.categorical_log(logw));
    }

    if (it > burn_in) out.draws.push_back({z, weight, lambda});
  }
  return out;
}

// Partition estimate by maximizing each subject's class posterior at the
// posterior-mean parameters; ties resolve to the lowest class index.
inline std::vector<int> lca_cluster_estimate(const BinaryMatrix& Y, const LcaOutput& fit) {
  if (fit.draws.empty()) throw DataError("lca_cluster_estimate needs retained draws");
  const std::size_t N = Y.rows(), L = Y.cols(), K = fit.k;
  std::vector<double> wbar(K, 0.0), lbar(K * L, 0.0);
  for (const LcaDraw& d : fit.draws) {
    for (std::size_t c = 0; c < K; ++c) wbar[c] += d.weight[c];
    for (std::size_t s = 0; s < K * L; ++s) lbar[s] += d.lambda[s];
  }
  const double B = static_cast<double>(fit.draws.size());
  for (auto& v : wbar) v /= B;
  for (auto& v : lbar) v /= B;

  std::vector<int> zhat(N);
  for (std::size_t i = 0; i < N; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    int pick = 0;
    for (std::size_t c = 0; c < K; ++c) {
      double lp = std::log(std::max(wbar[c], 1e-300));
      for (std::size_t l = 0; l < L; ++l) {
        const double lam = std::min(std::max(lbar[c * L + l], 1e-12), 1.0 - 1e-12);
        lp += Y(i, l) ? std::log(lam) : std::log1p(-lam);
      }
      if (lp > best) {
        best = lp;
        pick = static_cast<int>(c);
      }
    }
    zhat[i] = pick;
  }
  return zhat;
}

// ---------------------------------------------------------------------------
// replication study

struct BenchRecord {
  std::size_t cell = 0;
  std::string method;
  long rep = 0;
  double ari = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string error;
};

struct BenchSummary {
  std::size_t cell = 0;
  std::string method;
  long n_ok = 0, n_failed = 0;
  double mean_ari = std::numeric_limits<double>::quiet_NaN();
  double sd_ari = std::numeric_limits<double>::quiet_NaN();
};

struct BenchMethodConfig {
  SamplerConfig rlcm;          // template; seed is rederived per replication
  std::size_t baseline_k = 0;  // 0: use the design's latent class count 2^m
  long lca_iterations = 200;
  long lca_burn_in = 100;
};

struct BenchResults {
  std::vector<BenchRecord> records;
  std::vector<BenchSummary> summaries;
};

inline std::vector<BenchSummary> summarize_records(const std::vector<BenchRecord>& records) {
  std::vector<BenchSummary> out;
  auto slot = [&out](std::size_t cell, const std::string& method) -> BenchSummary& {
    for (auto& s : out)
      if (s.cell == cell && s.method == method) return s;
    out.push_back({cell, method, 0, 0, 0.0, 0.0});
    return out.back();
  };
  for (const BenchRecord& r : records) {
    BenchSummary& s = slot(r.cell, r.method);
    if (r.failed) {
      ++s.n_failed;
    } else {
      ++s.n_ok;
      s.mean_ari += r.ari;
    }
  }
  for (auto& s : out)
    s.mean_ari = s.n_ok > 0 ? s.mean_ari / static_cast<double>(s.n_ok)
                            : std::numeric_limits<double>::quiet_NaN();
  for (auto& s : out) {
    if (s.n_ok < 2) {
      s.sd_ari = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double ss = 0.0;
    for (const BenchRecord& r : records)
      if (!r.failed && r.cell == s.cell && r.method == s.method)
        ss += (r.ari - s.mean_ari) * (r.ari - s.mean_ari);
    s.sd_ari = std::sqrt(ss / static_cast<double>(s.n_ok - 1));
  }
  return out;
}

namespace detail {

inline double bench_one(const std::string& method, const SimDesign& design, const SimData& data,
                        const BenchMethodConfig& mcfg, std::uint64_t rep_seed) {
  Rng mrng = Rng::substream(rep_seed, fnv1a64(method));
  const std::size_t k =
      mcfg.baseline_k > 0 ? mcfg.baseline_k
                          : std::min<std::size_t>(std::size_t{1} << design.m, design.n);
  if (method == "hc") {
    return adjusted_rand_index(hclust_hamming(data.y, std::min(k, data.y.rows())), data.z);
  }
  if (method == "lca") {
    const LcaOutput fit =
        bayesian_lca(data.y, k, mcfg.lca_iterations, mcfg.lca_burn_in, mrng);
    return adjusted_rand_index(lca_cluster_estimate(data.y, fit), data.z);
  }
  if (method == "rlcm") {
    SamplerConfig cfg = mcfg.rlcm;
    cfg.seed = rep_seed;
    const std::vector<ChainOutput> chains = run_model_chains(data.y, cfg);
    const CoClusteringMatrix pihat = coclustering(chains);
    const LsClustering ls = ls_clustering(chains, pihat);
    return adjusted_rand_index(ls.z, data.z);
  }
  throw ConfigError("unknown benchmark method: " + method);
}

}  // namespace detail

// Runs every method on the same generated datasets, one record per
// (cell, method, replication). Failures inside a replication are recorded
// and skipped rather than aborting the study.
inline BenchResults run_replication_study(const std::vector<SimDesign>& cells,
                                          const std::vector<std::string>& methods, long R,
                                          const BenchMethodConfig& mcfg) {
  BenchResults out;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const SimDesign& design = cells[c];
    design.validate();
    for (long rep = 0; rep < R; ++rep) {
      const std::uint64_t rep_seed =
          design.seed ^ (0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(c) + 1));
      Rng gen_rng = Rng::substream(rep_seed, static_cast<std::uint64_t>(rep));

      bool gen_ok = true;
      SimData data;
      std::string gen_error;
      try {
        const BinaryMatrix Q = gen_Q(design.m, design.l, design.s, gen_rng);
        data = gen_data(design, Q, gen_rng);
      } catch (const std::runtime_error& e) {
        gen_ok = false;
        gen_error = e.what();
      }

      for (const std::string& method : methods) {
        BenchRecord rec;
        rec.cell = c;
        rec.method = method;
        rec.rep = rep;
        if (!gen_ok) {
          rec.failed = true;
          rec.error = gen_error;
        } else {
          try {
            rec.ari = detail::bench_one(
                method, design, data, mcfg,
                rep_seed ^ (0xD1B54A32D192ED03ull * (static_cast<std::uint64_t>(rep) + 1)));
          } catch (const std::runtime_error& e) {
            rec.failed = true;
            rec.error = e.what();
          }
        }
        out.records.push_back(std::move(rec));
      }
    }
  }
  out.summaries = summarize_records(out.records);
  return out;
}

}  // namespace rlcm
