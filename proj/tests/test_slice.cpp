#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rlcm/slice.hpp"

using namespace rlcm;

namespace {

BinaryMatrix random_binary(std::size_t n, std::size_t l, double dens, std::uint64_t seed) {
  Rng rng(seed);
  BinaryMatrix Y(n, l);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < l; ++c) Y(r, c) = rng.bernoulli(dens);
  return Y;
}

// Numeric reference CDF for the stick density, trapezoid rule on a log grid.
struct StickCdf {
  std::vector<double> u, c;

  StickCdf(double hi, long t, double alpha) {
    const std::size_t G = 1u << 17;
    u.resize(G);
    c.assign(G, 0.0);
    const double ulo = std::log(1e-12), uhi = std::log(hi);
    std::vector<double> g(G);
    double gmax = -1e300;
    for (std::size_t k = 0; k < G; ++k) {
      u[k] = ulo + (uhi - ulo) * static_cast<double>(k) / static_cast<double>(G - 1);
      g[k] = stick_logdensity(std::exp(u[k]), t, alpha) + u[k];
      gmax = std::max(gmax, g[k]);
    }
    for (std::size_t k = 1; k < G; ++k)
      c[k] = c[k - 1] +
             0.5 * (std::exp(g[k - 1] - gmax) + std::exp(g[k] - gmax)) * (u[k] - u[k - 1]);
    for (double& x : c) x /= c.back();
  }

  double operator()(double x) const {
    const double ux = std::log(x);
    if (ux <= u.front()) return 0.0;
    if (ux >= u.back()) return 1.0;
    const auto it = std::upper_bound(u.begin(), u.end(), ux);
    const std::size_t k = static_cast<std::size_t>(it - u.begin());
    const double frac = (ux - u[k - 1]) / (u[k] - u[k - 1]);
    return c[k - 1] + frac * (c[k] - c[k - 1]);
  }
};

double ks_statistic(std::vector<double> xs, const StickCdf& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = cdf(xs[i]);
    ks = std::max(ks, std::max(F - static_cast<double>(i) / n,
                               static_cast<double>(i + 1) / n - F));
  }
  return ks;
}

double tv_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
  return 0.5 * tv;
}

// Exact law of the cluster count under the partition prior, via the
// block-extension recursion for the ascending-factorial partition weights.
std::vector<double> cluster_count_logpmf(long N, const PartitionPrior& prior) {
  const double g = prior.gamma();
  std::vector<std::vector<double>> B(static_cast<std::size_t>(N + 1),
                                     std::vector<double>(static_cast<std::size_t>(N + 1), neg_inf));
  B[0][0] = 0.0;
  for (long n = 0; n < N; ++n) {
    for (long t = 0; t <= n; ++t) {
      const double cur = B[static_cast<std::size_t>(n)][static_cast<std::size_t>(t)];
      if (cur == neg_inf) continue;
      auto& nw = B[static_cast<std::size_t>(n + 1)][static_cast<std::size_t>(t + 1)];
      nw = log_add_exp(nw, cur + std::log(g));
      if (t >= 1) {
        auto& jo = B[static_cast<std::size_t>(n + 1)][static_cast<std::size_t>(t)];
        jo = log_add_exp(jo, cur + std::log(g * static_cast<double>(t) + static_cast<double>(n)));
      }
    }
  }
  std::vector<double> lp(static_cast<std::size_t>(N + 1), neg_inf);
  for (long t = 1; t <= N; ++t)
    lp[static_cast<std::size_t>(t)] =
        prior.log_Vn(t, N) + B[static_cast<std::size_t>(N)][static_cast<std::size_t>(t)];
  const double lse = log_sum_exp(lp);
  for (double& x : lp) x -= lse;
  return lp;
}

}  // namespace

TEST(StickSampler, MatchesNumericInverseCdf) {
  struct Case {
    double prev;
    long t;
    double alpha;
  };
  const Case cases[] = {{0.9, 2, 3.0}, {1.0, 4, 0.5}, {0.35, 6, 1.0}};
  std::uint64_t seed = 2024;
  for (const Case& cs : cases) {
    Rng rng(seed++);
    const std::size_t n = 10000;
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = sample_stick(cs.prev, cs.t, cs.alpha, rng);
    const double hi = std::min(cs.prev, 1.0) * (1.0 - 1e-12);
    const StickCdf cdf(hi, cs.t, cs.alpha);
    const double ks = ks_statistic(xs, cdf);
    EXPECT_LT(ks, 0.02) << "prev=" << cs.prev << " t=" << cs.t << " alpha=" << cs.alpha;
  }
}

TEST(StickSampler, DrawsStayInsideTheInterval) {
  Rng rng(5);
  struct Case {
    double prev;
    long t;
    double alpha;
  };
  const Case cases[] = {{0.5, 3, 1.0}, {0.02, 8, 2.0}, {1.0, 1, 0.7}};
  for (const Case& cs : cases) {
    for (int i = 0; i < 500; ++i) {
      const double w = sample_stick(cs.prev, cs.t, cs.alpha, rng);
      EXPECT_GT(w, 1e-12);
      EXPECT_LT(w, cs.prev);
    }
  }
  EXPECT_THROW(sample_stick(1e-13, 3, 1.0, rng), NumericError);
}

TEST(StickSampler, HighSliceLeavesTailEmpty) {
  // with ten clusters the first stick essentially never clears 0.9, so a
  // slice level that high represents no unowned machines at all
  Rng rng(17);
  for (int i = 0; i < 50; ++i) {
    const double w = sample_stick(1.0, 10, 1.0, rng);
    EXPECT_LT(w, 0.9);
  }
}

TEST(SliceStep, StructuralInvariantsHold) {
  const BinaryMatrix Y = random_binary(8, 21, 0.4, 31);
  SamplerConfig cfg;
  cfg.mode = SamplerMode::infinite;
  cfg.rule = Rule::dino;
  cfg.m_dagger = 4;
  cfg.seed = 5;
  cfg.validate();

  Rng rng = Rng::substream(cfg.seed, 0);
  SliceState st = init_slice_state(Y, cfg, rng);
  const PartitionPrior prior = cfg.partition_prior();
  const RatePrior rate_prior = cfg.rate_prior(Y.cols());
  const MustLinkUnits units = MustLinkUnits::build(Y, cfg.partial_clusters);
  const std::vector<double> ybar = column_means(Y);
  const std::size_t budget = slice_machine_budget(Y.cols());
  std::vector<std::string> warnings;

  for (int it = 0; it < 150; ++it) {
    slice_sampler_step(st, Y, cfg, prior, rate_prior, units, ybar, rng, &warnings);

    ASSERT_EQ(st.p.size(), st.m_rep());
    ASSERT_EQ(st.Q.rows(), st.m_rep());
    ASSERT_EQ(st.clusters.hstar.cols(), st.m_rep());
    ASSERT_LE(st.m_rep(), budget);
    st.clusters.check_consistency(Y);

    for (std::size_t m = 0; m < st.m_rep(); ++m) {
      const bool owned = st.clusters.hstar.col_sum(m) > 0;
      ASSERT_EQ(owned, m < st.m_plus) << "machine " << m;
      ASSERT_GT(st.p[m], 0.0);
      ASSERT_LT(st.p[m], 1.0);
      ASSERT_GE(st.p[m], st.s);
    }
    for (std::size_t m = st.m_plus; m + 1 < st.m_rep(); ++m) ASSERT_LT(st.p[m + 1], st.p[m]);

    ASSERT_GT(st.s, 0.0);
    ASSERT_LT(st.s, 1.0);
    ASSERT_TRUE(q_in_constraint_set(st.Q));
    std::vector<std::size_t> owned_rows(st.m_plus);
    std::iota(owned_rows.begin(), owned_rows.end(), std::size_t{0});
    ASSERT_TRUE(q_in_constraint_set(st.Q.select_rows(owned_rows)));

    const Draw d = record_slice_draw(st, Y, cfg, prior, rate_prior, it);
    ASSERT_TRUE(std::isfinite(d.logpost));
    ASSERT_EQ(d.q.rows(), st.m_plus);
    ASSERT_EQ(d.hstar.cols(), st.m_plus);
  }
}

TEST(SliceChain, DeterministicReplayAndDispatch) {
  const BinaryMatrix Y = random_binary(10, 23, 0.35, 7);
  SamplerConfig cfg;
  cfg.mode = SamplerMode::infinite;
  cfg.m_dagger = 4;
  cfg.iterations = 60;
  cfg.burn_in = 30;
  cfg.seed = 99;

  const ChainOutput a = run_slice_chain(Y, cfg, 0);
  const ChainOutput b = run_slice_chain(Y, cfg, 0);
  ASSERT_EQ(a.draws.size(), 30u);
  ASSERT_EQ(b.draws.size(), 30u);
  for (std::size_t i = 0; i < a.draws.size(); ++i) {
    const Draw& x = a.draws[i];
    const Draw& y = b.draws[i];
    EXPECT_EQ(x.iter, y.iter);
    EXPECT_EQ(x.z, y.z);
    EXPECT_EQ(x.hstar, y.hstar);
    EXPECT_EQ(x.q, y.q);
    EXPECT_EQ(x.p, y.p);
    EXPECT_EQ(x.theta, y.theta);
    EXPECT_EQ(x.psi, y.psi);
    EXPECT_EQ(x.alpha1, y.alpha1);
    EXPECT_EQ(x.logpost, y.logpost);
    EXPECT_EQ(x.t_tilde, y.t_tilde);
  }

  for (const Draw& d : a.draws) {
    ASSERT_TRUE(q_in_constraint_set(d.q));
    ASSERT_EQ(d.hstar.cols(), d.q.rows());
    const int t = 1 + *std::max_element(d.z.begin(), d.z.end());
    ASSERT_EQ(d.hstar.rows(), static_cast<std::size_t>(t));
    ASSERT_TRUE(std::isfinite(d.logpost));
    for (double w : d.p) {
      ASSERT_GT(w, 0.0);
      ASSERT_LT(w, 1.0);
    }
    for (std::size_t m = 0; m + 1 < d.q.rows(); ++m)
      ASSERT_GE(d.q.row_string(m), d.q.row_string(m + 1));
  }

  const ChainOutput c = run_model_chain(Y, cfg, 0);
  ASSERT_EQ(c.draws.size(), a.draws.size());
  for (std::size_t i = 0; i < a.draws.size(); ++i)
    EXPECT_EQ(c.draws[i].logpost, a.draws[i].logpost);

  const ChainOutput d1 = run_slice_chain(Y, cfg, 1);
  bool differs = false;
  for (std::size_t i = 0; i < std::min(d1.draws.size(), a.draws.size()); ++i)
    if (d1.draws[i].logpost != a.draws[i].logpost) differs = true;
  EXPECT_TRUE(differs);

  EXPECT_THROW(run_chain(Y, cfg, 0), ConfigError);
  SamplerConfig fin = cfg;
  fin.mode = SamplerMode::finite;
  EXPECT_THROW(run_slice_chain(Y, fin, 0), ConfigError);
}

TEST(SlicePrior, ActiveCountLawMatchesStickBreakingOracle) {
  // With the likelihood disabled the owned-machine count must follow the
  // unbounded-machine prior: cluster count from the partition prior, then
  // ownership of machines whose weights come from the decreasing-stick
  // construction (truncated far beyond any mass that matters).
  const long N = 6;
  const double alpha = 1.0;
  const BinaryMatrix Y(static_cast<std::size_t>(N), 41);

  SamplerConfig cfg;
  cfg.mode = SamplerMode::infinite;
  cfg.prior_only = true;
  cfg.fix_alpha1 = true;
  cfg.alpha1_init = alpha;
  cfg.fix_rates = true;
  cfg.iterations = 6000;
  cfg.burn_in = 1000;
  cfg.seed = 11;

  const ChainOutput chain = run_slice_chain(Y, cfg, 0);
  ASSERT_EQ(chain.draws.size(), 5000u);

  const std::size_t kmax = 42;
  std::vector<double> chain_k(kmax, 0.0), chain_t(static_cast<std::size_t>(N + 1), 0.0);
  for (const Draw& d : chain.draws) {
    chain_k[std::min(d.q.rows(), kmax - 1)] += 1.0;
    const int t = 1 + *std::max_element(d.z.begin(), d.z.end());
    chain_t[static_cast<std::size_t>(t)] += 1.0;
  }
  for (double& x : chain_k) x /= static_cast<double>(chain.draws.size());
  for (double& x : chain_t) x /= static_cast<double>(chain.draws.size());

  const PartitionPrior prior = cfg.partition_prior();
  const std::vector<double> tlog = cluster_count_logpmf(N, prior);
  std::vector<double> tpmf(tlog.size(), 0.0);
  for (std::size_t t = 0; t < tlog.size(); ++t)
    tpmf[t] = tlog[t] == neg_inf ? 0.0 : std::exp(tlog[t]);

  EXPECT_LT(tv_distance(chain_t, tpmf), 0.05);

  std::mt19937_64 gen(123);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t reps = 300000;
  std::vector<double> oracle_k(kmax, 0.0);
  for (std::size_t r = 0; r < reps; ++r) {
    double uu = unif(gen);
    long t = N;
    for (long cand = 1; cand <= N; ++cand) {
      uu -= tpmf[static_cast<std::size_t>(cand)];
      if (uu <= 0.0) {
        t = cand;
        break;
      }
    }
    double mu = 1.0;
    std::size_t k = 0;
    for (int stick = 0; stick < 20; ++stick) {
      mu *= std::pow(unif(gen), 1.0 / alpha);
      const double q = 1.0 - std::pow(1.0 - mu, static_cast<double>(t));
      if (unif(gen) < q) ++k;
    }
    oracle_k[std::min(k, kmax - 1)] += 1.0;
  }
  for (double& x : oracle_k) x /= static_cast<double>(reps);

  EXPECT_LT(tv_distance(chain_k, oracle_k), 0.08);
}

TEST(Config, InfiniteModeFlagRules) {
  SamplerConfig cfg;
  cfg.mode = SamplerMode::infinite;
  cfg.validate();

  SamplerConfig bad = cfg;
  bad.rule = Rule::dina;
  EXPECT_THROW(bad.validate(), ConfigError);

  bad = cfg;
  bad.fix_p = true;
  EXPECT_THROW(bad.validate(), ConfigError);

  bad = cfg;
  bad.fix_q = true;
  EXPECT_THROW(bad.validate(), ConfigError);

  SamplerConfig fin;
  fin.rule = Rule::dina;
  fin.fix_p = true;
  fin.fix_q = true;
  fin.fixed_q = BinaryMatrix::identity(9);
  fin.validate();
}
