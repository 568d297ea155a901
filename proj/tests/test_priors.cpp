#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "rlcm/priors.hpp"

namespace {

using namespace rlcm;

// all set partitions of {0..n-1} as restricted-growth label vectors
void enum_partitions_rec(std::vector<int>& z, int i, int maxlbl,
                         std::vector<std::vector<int>>& out) {
  if (i == static_cast<int>(z.size())) {
    out.push_back(z);
    return;
  }
  for (int lbl = 0; lbl <= maxlbl + 1; ++lbl) {
    z[i] = lbl;
    enum_partitions_rec(z, i + 1, std::max(maxlbl, lbl), out);
  }
}

std::vector<std::vector<int>> enum_partitions(int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> z(n, 0);
  enum_partitions_rec(z, 1, 0, out);
  return out;
}

std::vector<long> block_sizes_of(const std::vector<int>& z) {
  int t = 1 + *std::max_element(z.begin(), z.end());
  std::vector<long> sizes(t, 0);
  for (int v : z) ++sizes[v];
  return sizes;
}

std::string canonical_labels(const std::vector<int>& z) {
  std::map<int, int> relab;
  std::string out;
  for (int v : z) {
    auto it = relab.find(v);
    int lbl = it == relab.end() ? (relab[v] = static_cast<int>(relab.size())) : it->second;
    out.push_back(static_cast<char>('a' + lbl));
  }
  return out;
}

TEST(PartitionPrior, FrozenVnGeometricHalf) {
  PartitionPrior prior(1.0, PkFamily::geometric, 0.5);
  EXPECT_NEAR(prior.log_Vn(1, 3), -2.174142285083293, 1e-12);
  EXPECT_NEAR(prior.log_Vn(2, 3), -3.097157332632724, 1e-12);
  EXPECT_NEAR(prior.log_Vn(3, 3), -3.0639789982926273, 1e-12);
}

TEST(PartitionPrior, FrozenVnGeometricTenth) {
  PartitionPrior prior(1.0, PkFamily::geometric, 0.1);
  const double expected[6] = {-8.537064985277604, -9.224350020470098, -8.642368995001913,
                              -7.213332305682517, -5.1502395916544,   -2.5952728160940666};
  for (long t = 1; t <= 6; ++t) EXPECT_NEAR(prior.log_Vn(t, 6), expected[t - 1], 1e-11);
}

TEST(PartitionPrior, SingleSubjectNormalization) {
  PartitionPrior prior(2.5, PkFamily::geometric, 0.1);
  // V_1(1) * gamma = 1, so log V_1(1) = -log gamma
  EXPECT_NEAR(prior.log_Vn(1, 1), -std::log(2.5), 1e-12);
  EXPECT_NEAR(prior.log_eppf({1}), 0.0, 1e-12);
}

TEST(PartitionPrior, VnDomainErrors) {
  PartitionPrior prior(1.0, PkFamily::geometric, 0.5);
  EXPECT_THROW(prior.log_Vn(4, 3), DataError);
  EXPECT_THROW(prior.log_Vn(0, 3), DataError);
  for (long N : {10L, 30L, 50L})
    for (long t = 1; t <= N; t += 7) EXPECT_TRUE(std::isfinite(prior.log_Vn(t, N)));
}

TEST(PartitionPrior, ConstructorValidation) {
  EXPECT_THROW(PartitionPrior(0.0, PkFamily::geometric, 0.5), ConfigError);
  EXPECT_THROW(PartitionPrior(1.0, PkFamily::geometric, 1.5), ConfigError);
  EXPECT_THROW(PartitionPrior(1.0, PkFamily::poisson1, 0.0), ConfigError);
  EXPECT_NO_THROW(PartitionPrior(1.0, PkFamily::poisson1, 2.0));
}

TEST(PartitionPrior, PkSumsToOne) {
  for (auto fam : {PkFamily::geometric, PkFamily::poisson1}) {
    PartitionPrior prior(1.0, fam, fam == PkFamily::geometric ? 0.3 : 2.0);
    double tot = 0.0;
    for (long k = 1; k <= 400; ++k) tot += std::exp(prior.log_pk(k));
    EXPECT_NEAR(tot, 1.0, 1e-12);
  }
}

TEST(PartitionPrior, EppfNormalizationN2) {
  PartitionPrior prior(1.7, PkFamily::geometric, 0.4);
  double tot = std::exp(prior.log_eppf({2})) + std::exp(prior.log_eppf({1, 1}));
  EXPECT_NEAR(tot, 1.0, 1e-12);
}

TEST(PartitionPrior, EppfNormalizationN5AllPartitions) {
  auto parts = enum_partitions(5);
  ASSERT_EQ(parts.size(), 52u);
  for (auto [gam, fam, par] : {std::tuple{1.0, PkFamily::geometric, 0.1},
                               std::tuple{0.7, PkFamily::geometric, 0.5},
                               std::tuple{2.0, PkFamily::poisson1, 1.5}}) {
    PartitionPrior prior(gam, fam, par);
    double tot = 0.0;
    for (const auto& z : parts) tot += std::exp(prior.log_eppf(block_sizes_of(z)));
    EXPECT_NEAR(tot, 1.0, 1e-11);
  }
}

TEST(PartitionPrior, EppfSymmetry) {
  PartitionPrior prior(1.0, PkFamily::geometric, 0.1);
  EXPECT_NEAR(prior.log_eppf({3, 1, 2}), prior.log_eppf({1, 2, 3}), 1e-14);
  EXPECT_THROW(prior.log_eppf({2, 0}), DataError);
}

TEST(PartitionPrior, UrnMatchesEppf) {
  PartitionPrior prior(1.0, PkFamily::geometric, 0.5);
  auto parts = enum_partitions(3);
  std::map<std::string, double> exact;
  for (const auto& z : parts)
    exact[canonical_labels(z)] = std::exp(prior.log_eppf(block_sizes_of(z)));
  Rng rng(2026);
  std::map<std::string, int> freq;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    auto z = sample_partition_urn(3, prior, rng);
    ++freq[canonical_labels(z)];
  }
  double tv = 0.0;
  for (const auto& [key, p] : exact) tv += std::abs(p - freq[key] / double(n));
  EXPECT_LT(tv / 2.0, 0.03);
}

TEST(StatePrior, FrozenQuadratureFixture) {
  auto H = BinaryMatrix::from_row_strings({"10", "11"});
  EXPECT_NEAR(log_prior_Hstar(H, 1.3, 1.0), -3.3114604001017955, 2e-11);
}

TEST(StatePrior, MonteCarloOracle) {
  auto H = BinaryMatrix::from_row_strings({"10", "11"});
  const double alpha1 = 1.3, alpha2 = 1.0;
  const double a = alpha1 * alpha2 / 2.0, b = alpha2;
  Rng rng(31);
  const int n = 1000000;
  // column sums s = (2, 1), T = 2
  double acc1 = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double p1 = rng.beta(a, b);
    double p2 = rng.beta(a, b);
    acc1 += p1 * p1;
    acc2 += p2 * (1 - p2);
  }
  double mc = std::log(acc1 / n) + std::log(acc2 / n);
  EXPECT_NEAR(log_prior_Hstar(H, alpha1, alpha2), mc, 5e-3);
}

TEST(StatePrior, PermutationInvariances) {
  auto H = BinaryMatrix::from_row_strings({"101", "110", "000"});
  auto Hcols = BinaryMatrix::from_row_strings({"011", "101", "000"});  // columns permuted
  auto Hrows = BinaryMatrix::from_row_strings({"110", "000", "101"});  // rows permuted
  EXPECT_NEAR(log_prior_Hstar(H, 0.8, 1.0), log_prior_Hstar(Hcols, 0.8, 1.0), 1e-14);
  EXPECT_NEAR(log_prior_Hstar(H, 0.8, 1.0), log_prior_Hstar(Hrows, 0.8, 1.0), 1e-14);
}

// exhaustive search: can distinct columns be chosen forming two stacked
// identity blocks, with every row keeping support among the leftovers?
bool constraint_set_oracle(const BinaryMatrix& Q) {
  const std::size_t M = Q.rows(), L = Q.cols();
  if (2 * M > L) return false;
  std::vector<char> used(L, 0);
  std::vector<char> is_e(M * L, 0);
  for (std::size_t l = 0; l < L; ++l) {
    std::size_t ones = 0, who = 0;
    for (std::size_t m = 0; m < M; ++m)
      if (Q(m, l)) {
        ++ones;
        who = m;
      }
    if (ones == 1) is_e[who * L + l] = 1;
  }
  std::function<bool(std::size_t)> rec = [&](std::size_t k) -> bool {
    if (k == 2 * M) {
      for (std::size_t m = 0; m < M; ++m) {
        std::size_t support = 0;
        for (std::size_t l = 0; l < L; ++l)
          if (!used[l] && Q(m, l)) ++support;
        if (support == 0) return false;
      }
      return true;
    }
    std::size_t m = k % M;
    for (std::size_t l = 0; l < L; ++l) {
      if (used[l] || !is_e[m * L + l]) continue;
      used[l] = 1;
      if (rec(k + 1)) {
        used[l] = 0;
        return true;
      }
      used[l] = 0;
    }
    return false;
  };
  return rec(0);
}

TEST(ConstraintSet, CanonicalExample) {
  auto Q = BinaryMatrix::from_row_strings({"10101", "01011"});
  EXPECT_TRUE(q_in_constraint_set(Q));
  EXPECT_TRUE(check_C1(Q));
  EXPECT_TRUE(check_C3(Q));
}

TEST(ConstraintSet, MissingSingletons) {
  // state 1 appears in only one singleton column (needs two)
  auto Q = BinaryMatrix::from_row_strings({"111101", "001111"});
  EXPECT_FALSE(check_C1(Q));
  EXPECT_FALSE(q_in_constraint_set(Q));
}

TEST(ConstraintSet, MatchesExhaustiveOracle) {
  Rng rng(37);
  int members = 0;
  for (int rep = 0; rep < 300; ++rep) {
    // half the columns are planted unit vectors so membership is reachable
    BinaryMatrix Q(3, 10);
    for (std::size_t l = 0; l < 10; ++l) {
      if (rng.bernoulli(0.5)) {
        Q(rng.uniform_below(3), l) = 1;
      } else {
        for (std::size_t m = 0; m < 3; ++m) Q(m, l) = rng.bernoulli(0.4);
      }
    }
    bool mine = q_in_constraint_set(Q);
    ASSERT_EQ(mine, constraint_set_oracle(Q)) << "rep " << rep;
    members += mine;
  }
  // both outcomes must actually occur for the comparison to mean anything
  EXPECT_GT(members, 10);
  EXPECT_LT(members, 290);
}

TEST(ConstraintSet, TooFewColumns) {
  auto Q = BinaryMatrix::from_row_strings({"111", "111"});
  EXPECT_FALSE(check_C1(Q));  // 2M > L
}

TEST(ConditionChecks, TripleIdentity) {
  BinaryMatrix Q(3, 9);
  for (std::size_t rep = 0; rep < 3; ++rep)
    for (std::size_t m = 0; m < 3; ++m) Q(m, rep * 3 + m) = 1;
  EXPECT_TRUE(check_C1(Q));
  EXPECT_TRUE(check_C3(Q));
  EXPECT_TRUE(q_in_constraint_set(Q));
}

TEST(ConditionChecks, ZeroRowFailsC3) {
  BinaryMatrix Q(2, 6);
  Q(0, 0) = Q(0, 2) = Q(0, 4) = 1;
  EXPECT_FALSE(check_C3(Q));
}

// all comparable ordered pairs, not only covering pairs
bool c2_oracle(const BinaryMatrix& Q, Rule rule) {
  const std::size_t M = Q.rows(), L = Q.cols();
  std::vector<std::size_t> need(M, 2);
  std::vector<char> is_identity_col(L, 0);
  for (std::size_t l = 0; l < L; ++l) {
    std::size_t ones = 0, who = 0;
    for (std::size_t m = 0; m < M; ++m)
      if (Q(m, l)) {
        ++ones;
        who = m;
      }
    if (ones == 1 && need[who] > 0) {
      --need[who];
      is_identity_col[l] = 1;
    }
  }
  std::vector<std::size_t> tilde;
  for (std::size_t l = 0; l < L; ++l)
    if (!is_identity_col[l]) tilde.push_back(l);
  const std::size_t P = std::size_t{1} << M;
  std::vector<std::vector<Bit>> rows(P, std::vector<Bit>(L));
  std::vector<Bit> eta(M);
  for (std::size_t a = 0; a < P; ++a) {
    for (std::size_t m = 0; m < M; ++m) eta[m] = (a >> m) & 1u;
    gamma_row_into(eta.data(), Q, rule, rows[a].data());
  }
  for (std::size_t a = 0; a < P; ++a)
    for (std::size_t b = 0; b < P; ++b) {
      if (a == b) continue;
      if ((a & b) != b) continue;  // require a >= b componentwise
      bool differ = false;
      for (auto l : tilde)
        if (rows[a][l] != rows[b][l]) differ = true;
      if (!differ) return false;
    }
  return true;
}

TEST(ConditionChecks, C2MatchesBruteForceLattice) {
  Rng rng(41);
  int holds = 0, total = 0;
  while (total < 120) {
    BinaryMatrix Q(2, 7);
    for (std::size_t m = 0; m < 2; ++m)
      for (std::size_t l = 0; l < 7; ++l) Q(m, l) = rng.bernoulli(0.4);
    if (!check_C1(Q)) continue;
    ++total;
    for (Rule rule : {Rule::dino, Rule::dina}) {
      bool mine = check_C2(Q, rule);
      ASSERT_EQ(mine, c2_oracle(Q, rule));
      holds += mine;
    }
  }
  EXPECT_GT(holds, 0);
  EXPECT_LT(holds, 2 * total);
}

TEST(ConditionChecks, C2Requirements) {
  auto bad = BinaryMatrix::from_row_strings({"110000", "110000"});
  EXPECT_THROW(check_C2(bad, Rule::dino), DataError);
  BinaryMatrix big(13, 27);
  EXPECT_THROW(check_C2(big, Rule::dino), CapacityError);
}

TEST(TruncatedBeta, DrawsStayInRange) {
  Rng rng(43);
  for (int i = 0; i < 2000; ++i) {
    double x = sample_truncated_beta(2.0, 3.0, 0.25, 0.5, rng);
    ASSERT_GT(x, 0.25);
    ASSERT_LT(x, 0.5);
  }
}

TEST(TruncatedBeta, UnconstrainedMatchesBetaByKS) {
  Rng rng(47);
  const int n = 100000;
  std::vector<double> u(n);
  for (int i = 0; i < n; ++i)
    u[i] = boost::math::ibeta(2.5, 1.5, sample_truncated_beta(2.5, 1.5, 0.0, 1.0, rng));
  std::sort(u.begin(), u.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    d = std::max(d, std::abs(u[i] - (i + 1.0) / n));
    d = std::max(d, std::abs(u[i] - double(i) / n));
  }
  // Kolmogorov statistic against the 1% critical value
  EXPECT_LT(d * std::sqrt(double(n)), 1.628);
}

TEST(TruncatedBeta, FrozenTruncatedMean) {
  Rng rng(53);
  const int n = 100000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += sample_truncated_beta(9.0, 1.0, 0.5, 1.0, rng);
  EXPECT_NEAR(acc / n, 0.900880626223092, 2e-3);
  EXPECT_GT(acc / n, 0.9 - 0.005);
}

TEST(TruncatedBeta, DegenerateIntervalRejected) {
  Rng rng(59);
  EXPECT_THROW(sample_truncated_beta(9.0, 1.0, 1e-300, 1e-200, rng), NumericError);
  EXPECT_THROW(sample_truncated_beta(2.0, 2.0, 0.7, 0.7, rng), NumericError);
}

}  // namespace
