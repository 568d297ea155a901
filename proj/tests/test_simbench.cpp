#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "rlcm/simbench.hpp"

using namespace rlcm;

namespace {

SimDesign small_design() {
  SimDesign d;
  // generous l and s keep fresh draws comfortably inside the constraint set
  d.l = 30;
  d.n = 40;
  d.m = 2;
  d.theta0 = 0.9;
  d.psi0 = 0.1;
  d.pi0 = uniform_pattern_weights(2);
  d.s = 0.35;
  d.seed = 11;
  return d;
}

}  // namespace

TEST(GenQ, OutputAlwaysInConstraintSet) {
  Rng rng(301);
  for (int rep = 0; rep < 50; ++rep) {
    const BinaryMatrix Q = gen_Q(3, 100, 0.2, rng);
    EXPECT_TRUE(q_in_constraint_set(Q));
  }
  for (int rep = 0; rep < 50; ++rep) {
    const BinaryMatrix Q2 = gen_Q(2, 40, 0.3, rng);
    EXPECT_TRUE(q_in_constraint_set(Q2));
  }
}

TEST(GenQ, RowDensityTracksBernoulliRate) {
  Rng rng(302);
  const double s = 0.2;
  double ones = 0.0, total = 0.0;
  while (total < 100000.0) {
    const BinaryMatrix Q = gen_Q(3, 100, s, rng);
    for (std::size_t m = 0; m < Q.rows(); ++m) ones += static_cast<double>(Q.row_sum(m));
    total += static_cast<double>(Q.rows() * Q.cols());
  }
  EXPECT_NEAR(ones / total, s, 0.02);
}

TEST(GenQ, SingleDatasetDesignShape) {
  Rng rng(303);
  const BinaryMatrix Q = gen_Q(3, 100, 0.2, rng);
  EXPECT_EQ(Q.rows(), 3u);
  EXPECT_EQ(Q.cols(), 100u);
  EXPECT_TRUE(q_in_constraint_set(Q));
}

TEST(GenQ, InfeasibleGeometryExhaustsRepairBudget) {
  // at L = 2M the membership predicate cannot hold, swaps never fix it
  Rng rng(304);
  EXPECT_THROW(gen_Q(2, 4, 0.5, rng), CapacityError);
  EXPECT_THROW(gen_Q(2, 3, 0.5, rng), ConfigError);
  EXPECT_THROW(gen_Q(2, 10, 0.0, rng), ConfigError);
}

TEST(GenData, PatternFrequenciesMatchWeights) {
  SimDesign d;
  d.l = 10;
  d.n = 12000;
  d.m = 3;
  d.pi0 = sim1_pattern_weights();
  d.s = 0.25;
  d.seed = 5;
  Rng rng(901);
  // hand-built member of the constraint set; only pattern draws matter here
  const auto Q = BinaryMatrix::from_row_strings(
      {"1001001011", "0100100111", "0010010101"});
  ASSERT_TRUE(q_in_constraint_set(Q));
  const SimData data = gen_data(d, Q, rng);

  std::vector<double> count(8, 0.0);
  for (int zi : data.z) count[static_cast<std::size_t>(zi)] += 1.0;
  double stat = 0.0;
  for (std::size_t a = 0; a < 8; ++a) {
    const double expected = static_cast<double>(d.n) * d.pi0[a];
    stat += (count[a] - expected) * (count[a] - expected) / expected;
  }
  // 99th percentile of a chi-square with 7 degrees of freedom
  EXPECT_LT(stat, 18.475306906582357);
}

TEST(GenData, PerfectRatesReproduceIdealResponses) {
  SimDesign d = small_design();
  d.theta0 = 1.0;
  d.psi0 = 0.0;
  Rng rng(902);
  const BinaryMatrix Q = gen_Q(d.m, d.l, d.s, rng);
  const SimData data = gen_data(d, Q, rng);
  std::vector<Bit> gam(d.l);
  for (std::size_t i = 0; i < d.n; ++i) {
    gamma_row_into(data.eta.row(i), Q, Rule::dino, gam.data());
    for (std::size_t l = 0; l < d.l; ++l) EXPECT_EQ(data.y(i, l), gam[l]);
  }
}

TEST(GenData, FeatureMeansMatchAnalyticAverages) {
  SimDesign d = small_design();
  d.n = 20000;
  Rng rng(903);
  const BinaryMatrix Q = gen_Q(d.m, d.l, d.s, rng);
  const SimData data = gen_data(d, Q, rng);

  // analytic mean per feature: sum over patterns of pi0 * rate
  std::vector<double> expected(d.l, 0.0);
  std::vector<Bit> eta(d.m), gam(d.l);
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t m = 0; m < d.m; ++m) eta[m] = (a >> m) & 1u;
    gamma_row_into(eta.data(), Q, Rule::dino, gam.data());
    for (std::size_t l = 0; l < d.l; ++l)
      expected[l] += d.pi0[a] * (gam[l] ? d.theta0 : d.psi0);
  }
  for (std::size_t l = 0; l < d.l; ++l) {
    double mean = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) mean += data.y(i, l);
    mean /= static_cast<double>(d.n);
    EXPECT_NEAR(mean, expected[l], 0.02);
  }
}

TEST(GenData, DesignValidationRejectsBadWeights) {
  SimDesign d = small_design();
  d.pi0 = {0.5, 0.5};  // wrong length for m=2
  Rng rng(1);
  EXPECT_THROW(gen_data(d, BinaryMatrix(2, 20), rng), ConfigError);
  d = small_design();
  d.pi0[0] += 0.1;
  EXPECT_THROW(d.validate(), ConfigError);
}

TEST(HclustHamming, ExtremesAndErrors) {
  const auto Y = BinaryMatrix::from_row_strings({"0000", "0001", "1111", "1110", "0011"});
  const std::vector<int> singletons = hclust_hamming(Y, 5);
  const std::set<int> labels(singletons.begin(), singletons.end());
  EXPECT_EQ(labels.size(), 5u);
  const std::vector<int> one = hclust_hamming(Y, 1);
  for (int v : one) EXPECT_EQ(v, one[0]);
  EXPECT_THROW(hclust_hamming(Y, 6), DataError);
  EXPECT_THROW(hclust_hamming(Y, 0), DataError);
}

TEST(HclustHamming, FixtureCutsMatchHandLinkage) {
  const auto Y = BinaryMatrix::from_row_strings({"0000", "0001", "1111", "1110", "0011"});
  EXPECT_EQ(hclust_hamming(Y, 4), (std::vector<int>{0, 0, 1, 2, 3}));
  EXPECT_EQ(hclust_hamming(Y, 3), (std::vector<int>{0, 0, 1, 1, 2}));
  EXPECT_EQ(hclust_hamming(Y, 2), (std::vector<int>{0, 0, 1, 1, 0}));
}

TEST(HclustHamming, DuplicateRowsMergeFirst) {
  const auto Y = BinaryMatrix::from_row_strings({"1010", "0101", "1010", "1111"});
  const std::vector<int> cut = hclust_hamming(Y, 3);
  EXPECT_EQ(cut[0], cut[2]);
  EXPECT_NE(cut[0], cut[1]);
  EXPECT_NE(cut[0], cut[3]);
}

TEST(HclustHamming, FeaturePermutationInvariant) {
  Rng rng(41);
  BinaryMatrix Y(12, 6);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t l = 0; l < 6; ++l) Y(i, l) = rng.bernoulli(0.4) ? 1 : 0;
  const std::vector<std::size_t> perm = {4, 2, 0, 5, 1, 3};
  const BinaryMatrix Yp = Y.select_cols(perm);
  for (std::size_t k = 1; k <= 12; k += 3)
    EXPECT_EQ(hclust_hamming(Y, k), hclust_hamming(Yp, k));
}

TEST(BayesianLca, SingleClassAlwaysOneCluster) {
  Rng rng(71);
  BinaryMatrix Y(10, 4);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t l = 0; l < 4; ++l) Y(i, l) = rng.bernoulli(0.5) ? 1 : 0;
  const LcaOutput fit = bayesian_lca(Y, 1, 20, 10, rng);
  const std::vector<int> zhat = lca_cluster_estimate(Y, fit);
  for (int v : zhat) EXPECT_EQ(v, 0);
}

TEST(BayesianLca, WellSeparatedClassesRecovered) {
  Rng rng(72);
  const std::size_t N = 60, L = 12;
  BinaryMatrix Y(N, L);
  std::vector<int> truth(N);
  for (std::size_t i = 0; i < N; ++i) {
    const bool grp = i >= N / 2;
    truth[i] = grp ? 1 : 0;
    for (std::size_t l = 0; l < L; ++l) {
      const bool high = (l < L / 2) != grp;
      Y(i, l) = rng.bernoulli(high ? 0.92 : 0.08) ? 1 : 0;
    }
  }
  const LcaOutput fit = bayesian_lca(Y, 2, 400, 150, rng);
  const std::vector<int> zhat = lca_cluster_estimate(Y, fit);
  EXPECT_GT(adjusted_rand_index(zhat, truth), 0.9);
}

TEST(BayesianLca, LabelPermutationLeavesPartitionAlone) {
  Rng rng(73);
  BinaryMatrix Y(16, 5);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t l = 0; l < 5; ++l) Y(i, l) = rng.bernoulli(i < 8 ? 0.8 : 0.2) ? 1 : 0;
  const LcaOutput fit = bayesian_lca(Y, 3, 60, 30, rng);
  LcaOutput permuted = fit;
  const std::size_t perm[3] = {2, 0, 1};
  for (LcaDraw& d : permuted.draws) {
    LcaDraw src = d;
    for (auto& v : d.z) v = static_cast<int>(perm[static_cast<std::size_t>(v)]);
    for (std::size_t c = 0; c < 3; ++c) {
      d.weight[perm[c]] = src.weight[c];
      for (std::size_t l = 0; l < 5; ++l) d.lambda[perm[c] * 5 + l] = src.lambda[c * 5 + l];
    }
  }
  const std::vector<int> a = lca_cluster_estimate(Y, fit);
  const std::vector<int> b = lca_cluster_estimate(Y, permuted);
  EXPECT_DOUBLE_EQ(adjusted_rand_index(a, b), 1.0);
}

TEST(ReplicationStudy, SmokeRunEmitsRecordsAndSummary) {
  BenchMethodConfig mcfg;
  const BenchResults res = run_replication_study({small_design()}, {"hc"}, 2, mcfg);
  ASSERT_EQ(res.records.size(), 2u);
  ASSERT_EQ(res.summaries.size(), 1u);
  EXPECT_EQ(res.summaries[0].method, "hc");
  EXPECT_EQ(res.summaries[0].n_ok, 2);
  EXPECT_EQ(res.summaries[0].n_failed, 0);
  EXPECT_FALSE(std::isnan(res.summaries[0].mean_ari));
}

TEST(ReplicationStudy, AggregationEqualsRecomputation) {
  BenchMethodConfig mcfg;
  mcfg.lca_iterations = 40;
  mcfg.lca_burn_in = 20;
  const BenchResults res =
      run_replication_study({small_design()}, {"hc", "lca"}, 3, mcfg);
  const std::vector<BenchSummary> redo = summarize_records(res.records);
  ASSERT_EQ(redo.size(), res.summaries.size());
  for (std::size_t i = 0; i < redo.size(); ++i) {
    EXPECT_EQ(redo[i].method, res.summaries[i].method);
    EXPECT_EQ(redo[i].n_ok, res.summaries[i].n_ok);
    EXPECT_DOUBLE_EQ(redo[i].mean_ari, res.summaries[i].mean_ari);
    if (!std::isnan(redo[i].sd_ari))
      EXPECT_DOUBLE_EQ(redo[i].sd_ari, res.summaries[i].sd_ari);
  }

  // mean/sd agree with direct recomputation from the raw records
  for (const BenchSummary& s : res.summaries) {
    double mean = 0.0;
    long n = 0;
    for (const BenchRecord& r : res.records)
      if (!r.failed && r.method == s.method && r.cell == s.cell) {
        mean += r.ari;
        ++n;
      }
    ASSERT_EQ(n, s.n_ok);
    EXPECT_NEAR(s.mean_ari, mean / static_cast<double>(n), 1e-12);
  }
}

TEST(ReplicationStudy, PerReplicationFailuresAreRecordedNotFatal) {
  SimDesign doomed = small_design();
  doomed.l = 4;  // 2m = l: repair cannot succeed
  BenchMethodConfig mcfg;
  const BenchResults res = run_replication_study({doomed}, {"hc"}, 2, mcfg);
  ASSERT_EQ(res.records.size(), 2u);
  for (const BenchRecord& r : res.records) {
    EXPECT_TRUE(r.failed);
    EXPECT_FALSE(r.error.empty());
  }
  EXPECT_EQ(res.summaries[0].n_failed, 2);
  EXPECT_EQ(res.summaries[0].n_ok, 0);
}

TEST(ReplicationStudy, FullGridExpandsTheStatedAxes) {
  const std::vector<SimDesign> grid = sim2_grid();
  EXPECT_EQ(grid.size(), 4u * 3u * 2u * 2u * 2u * 2u);
  std::set<std::size_t> Ls, Ns;
  std::set<double> thetas, psis, ss;
  std::set<std::vector<double>> pis;
  for (const SimDesign& d : grid) {
    Ls.insert(d.l);
    Ns.insert(d.n);
    thetas.insert(d.theta0);
    psis.insert(d.psi0);
    ss.insert(d.s);
    pis.insert(d.pi0);
    EXPECT_EQ(d.m, 3u);
    EXPECT_EQ(d.replications, 60);
    d.validate();
  }
  EXPECT_EQ(Ls, (std::set<std::size_t>{50, 100, 200, 400}));
  EXPECT_EQ(Ns, (std::set<std::size_t>{50, 100, 200}));
  EXPECT_EQ(thetas, (std::set<double>{0.8, 0.9}));
  EXPECT_EQ(psis, (std::set<double>{0.05, 0.15}));
  EXPECT_EQ(ss, (std::set<double>{0.1, 0.2}));
  EXPECT_EQ(pis.size(), 2u);
  // distinct seeds per cell
  std::set<std::uint64_t> seeds;
  for (const SimDesign& d : grid) seeds.insert(d.seed);
  EXPECT_EQ(seeds.size(), grid.size());
}

TEST(SubsetClustering, RunsAsFixedIdentityConfig) {
  // one-feature-per-state special case: fix the design matrix at the identity
  Rng rng(55);
  BinaryMatrix Y(8, 5);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t l = 0; l < 5; ++l) Y(i, l) = rng.bernoulli(i < 4 ? 0.85 : 0.15) ? 1 : 0;
  SamplerConfig cfg;
  cfg.fix_q = true;  // no matrix supplied: identity with M = L
  cfg.iterations = 30;
  cfg.burn_in = 10;
  cfg.seed = 9;
  const ChainOutput out = run_chain(Y, cfg, 0);
  ASSERT_FALSE(out.draws.empty());
  for (const Draw& d : out.draws) {
    ASSERT_EQ(d.q.rows(), 5u);
    for (std::size_t m = 0; m < 5; ++m)
      for (std::size_t l = 0; l < 5; ++l)
        EXPECT_EQ(static_cast<int>(d.q(m, l)), m == l ? 1 : 0);
  }
}
