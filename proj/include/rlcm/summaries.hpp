#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "rlcm/errors.hpp"
#include "rlcm/sampler.hpp"

namespace rlcm {

// ---------------------------------------------------------------------------
// co-clustering

struct CoClusteringMatrix {
  std::size_t n = 0;
  std::vector<double> pi;  // row-major n x n, symmetric, unit diagonal

  double operator()(std::size_t i, std::size_t j) const { return pi[i * n + j]; }
};

inline std::size_t total_draws(const std::vector<ChainOutput>& chains) {
  std::size_t b = 0;
  for (const ChainOutput& c : chains) b += c.draws.size();
  return b;
}

// Fraction of retained draws (pooled across chains) placing i and i' together.
inline CoClusteringMatrix coclustering(const std::vector<ChainOutput>& chains) {
  const std::size_t B = total_draws(chains);
  if (B == 0) throw DataError("coclustering needs at least one retained draw");
  const std::size_t N = chains.front().n;
  CoClusteringMatrix out;
  out.n = N;
  out.pi.assign(N * N, 0.0);
  for (const ChainOutput& c : chains) {
    if (c.n != N) throw DataError("chains disagree on the number of subjects");
    for (const Draw& d : c.draws)
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = i; j < N; ++j)
          if (d.z[i] == d.z[j]) out.pi[i * N + j] += 1.0;
  }
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i; j < N; ++j) {
      out.pi[i * N + j] /= static_cast<double>(B);
      out.pi[j * N + i] = out.pi[i * N + j];
    }
  return out;
}

// ---------------------------------------------------------------------------
// least-squares partition

struct LsClustering {
  std::vector<int> z;
  double loss = 0.0;
  std::size_t chain = 0;  // position in the chain vector
  long iteration = 0;     // sweep index of the winning draw
};

inline double partition_ls_loss(const std::vector<int>& z, const CoClusteringMatrix& pihat) {
  const std::size_t N = pihat.n;
  double loss = 0.0;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      const double delta = (z[i] == z[j]) ? 1.0 : 0.0;
      const double r = delta - pihat(i, j);
      loss += r * r;
    }
  return loss;
}

// Retained draw whose pairwise-agreement matrix is closest (squared error)
// to the pooled co-clustering matrix; ties keep the earliest (chain, sweep).
inline LsClustering ls_clustering(const std::vector<ChainOutput>& chains,
                                  const CoClusteringMatrix& pihat) {
  if (total_draws(chains) == 0) throw DataError("ls_clustering needs at least one retained draw");
  LsClustering best;
  bool have = false;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (const Draw& d : chains[c].draws) {
      const double loss = partition_ls_loss(d.z, pihat);
      if (!have || loss < best.loss) {
        have = true;
        best.z = d.z;
        best.loss = loss;
        best.chain = c;
        best.iteration = d.iter;
      }
    }
  return best;
}

// ---------------------------------------------------------------------------
// scientific clusters

struct ScientificPartition {
  std::vector<int> z;   // block labels in first-appearance order over subjects
  BinaryMatrix states;  // t_tilde x M, row j = shared state vector of block j
  long t_tilde = 0;
};

// Coarsen a partition by pooling clusters whose state vectors coincide.
inline ScientificPartition merge_scientific(const std::vector<int>& z,
                                            const BinaryMatrix& hstar) {
  const std::size_t N = z.size();
  ScientificPartition out;
  out.z.resize(N);
  std::unordered_map<std::string, int> seen;
  std::vector<std::size_t> rep_rows;
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t j = static_cast<std::size_t>(z[i]);
    if (j >= hstar.rows()) throw DataError("partition label outside the state matrix");
    const std::string key = hstar.row_string(j);
    auto it = seen.find(key);
    if (it == seen.end()) {
      it = seen.emplace(key, static_cast<int>(rep_rows.size())).first;
      rep_rows.push_back(j);
    }
    out.z[i] = it->second;
  }
  out.states = hstar.select_rows(rep_rows);
  out.t_tilde = static_cast<long>(rep_rows.size());
  return out;
}

// ---------------------------------------------------------------------------
// posterior distribution of the scientific-cluster count

struct CountDistribution {
  std::map<long, double> pmf;
  long median = 0;
  long lo = 0, hi = 0;  // central 95% credible interval

  // smallest value whose cumulative mass reaches q
  long quantile(double q) const {
    double acc = 0.0;
    for (const auto& [v, p] : pmf) {
      acc += p;
      if (acc >= q - 1e-12) return v;
    }
    return pmf.empty() ? 0 : pmf.rbegin()->first;
  }
};

inline CountDistribution posterior_T_tilde(const std::vector<ChainOutput>& chains) {
  CountDistribution out;
  const std::size_t B = total_draws(chains);
  if (B == 0) return out;
  for (const ChainOutput& c : chains)
    for (const Draw& d : c.draws) out.pmf[d.t_tilde] += 1.0;
  for (auto& [v, p] : out.pmf) p /= static_cast<double>(B);
  out.median = out.quantile(0.5);
  out.lo = out.quantile(0.025);
  out.hi = out.quantile(0.975);
  return out;
}

// ---------------------------------------------------------------------------
// design-matrix selection

struct QSelection {
  BinaryMatrix q;
  std::size_t chain = 0;
  long iteration = 0;
  double loss = 0.0;
};

// L x L co-activation counts: entry (l, l') = number of rows loading both.
inline std::vector<double> coactivation(const BinaryMatrix& Q) {
  const std::size_t M = Q.rows(), L = Q.cols();
  std::vector<double> g(L * L, 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    const Bit* r = Q.row(m);
    for (std::size_t a = 0; a < L; ++a) {
      if (!r[a]) continue;
      for (std::size_t b = 0; b < L; ++b)
        if (r[b]) g[a * L + b] += 1.0;
    }
  }
  return g;
}

// Draw whose co-activation matrix is Frobenius-closest to the posterior mean
// co-activation matrix; ties keep the earliest (chain, sweep). Row order of
// any single Q never matters because Q^T Q is row-permutation invariant.
inline QSelection select_Q_ls(const std::vector<ChainOutput>& chains) {
  const std::size_t B = total_draws(chains);
  if (B == 0) throw DataError("select_Q_ls needs at least one retained draw");
  const std::size_t L = chains.front().l;
  std::vector<double> mean(L * L, 0.0);
  for (const ChainOutput& c : chains) {
    if (c.l != L) throw DataError("chains disagree on the number of features");
    for (const Draw& d : c.draws) {
      const std::vector<double> g = coactivation(d.q);
      for (std::size_t k = 0; k < L * L; ++k) mean[k] += g[k];
    }
  }
  for (double& v : mean) v /= static_cast<double>(B);

  QSelection best;
  bool have = false;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (const Draw& d : chains[c].draws) {
      const std::vector<double> g = coactivation(d.q);
      double ss = 0.0;
      for (std::size_t k = 0; k < L * L; ++k) {
        const double r = g[k] - mean[k];
        ss += r * r;
      }
      const double loss = std::sqrt(ss);
      if (!have || loss < best.loss) {
        have = true;
        best.q = d.q;
        best.chain = c;
        best.iteration = d.iter;
        best.loss = loss;
      }
    }
  return best;
}

// ---------------------------------------------------------------------------
// marginal state probabilities

struct StateMarginals {
  std::size_t n = 0, m = 0;
  std::vector<double> prob;  // row-major n x m
  bool conditioned = false;  // set when the run was a refit with fixed Q / partition

  double operator()(std::size_t i, std::size_t mm) const { return prob[i * m + mm]; }
};

// Empirical frequency of each subject's state bit over retained draws. Draws
// whose state dimension falls short of the widest draw contribute zeros to
// the missing columns.
inline StateMarginals state_marginals(const std::vector<ChainOutput>& chains,
                                      bool conditioned = false) {
  StateMarginals out;
  out.conditioned = conditioned;
  const std::size_t B = total_draws(chains);
  if (B == 0) return out;
  out.n = chains.front().n;
  for (const ChainOutput& c : chains)
    for (const Draw& d : c.draws) out.m = std::max(out.m, d.hstar.cols());
  out.prob.assign(out.n * out.m, 0.0);
  for (const ChainOutput& c : chains) {
    if (c.n != out.n) throw DataError("chains disagree on the number of subjects");
    for (const Draw& d : c.draws)
      for (std::size_t i = 0; i < out.n; ++i) {
        const Bit* eta = d.hstar.row(static_cast<std::size_t>(d.z[i]));
        for (std::size_t mm = 0; mm < d.hstar.cols(); ++mm)
          if (eta[mm]) out.prob[i * out.m + mm] += 1.0;
      }
  }
  for (double& v : out.prob) v /= static_cast<double>(B);
  return out;
}

}  // namespace rlcm
