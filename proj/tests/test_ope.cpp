#include <gtest/gtest.h>

#include <cmath>

#include "possession_rl/ope.hpp"
#include "support/two_state_mdp.hpp"

namespace {

using namespace prl;
using prl::testing::TwoStateMdp;

// Σ_t γ^t (Π_{k≤t} ρ_k) r_t, written out directly.
double per_decision_is(const OpeEpisode& e, const OpeConfig& cfg) {
  double v = 0.0, w = 1.0, g = 1.0;
  for (const auto& s : e.steps) {
    double rho = s.p[s.action] / s.q_taken;
    if (cfg.clip) rho = std::clamp(rho, cfg.w_min, cfg.w_max);
    w *= rho;
    v += g * w * s.reward;
    g *= cfg.gamma;
  }
  return v;
}

std::vector<OpeEpisode> random_episodes(Rng& rng, std::size_t n) {
  std::vector<OpeEpisode> eps(n);
  for (std::size_t i = 0; i < n; ++i) {
    eps[i].id = i;
    const std::size_t len = 1 + rng.uniform_index(8);
    for (std::size_t t = 0; t < len; ++t) {
      OpeStep s;
      std::array<double, 4> q{}, p{};
      double sq = 0.0, sp = 0.0;
      for (std::size_t a = 0; a < 4; ++a) {
        q[a] = rng.uniform(0.05, 1.0);
        p[a] = rng.uniform(0.05, 1.0);
        sq += q[a];
        sp += p[a];
      }
      s.action = rng.uniform_index(4);
      s.q_taken = q[s.action] / sq;
      for (std::size_t a = 0; a < 4; ++a) {
        s.p[a] = p[a] / sp;
        s.qhat[a] = rng.uniform(-1, 1);
      }
      s.reward = rng.uniform(-0.5, 0.5);
      eps[i].steps.push_back(s);
    }
    eps[i].ret = rng.uniform(-1, 1);
  }
  return eps;
}

TEST(Ope, TargetEqualToBehaviourGivesMeanReturn) {
  Rng rng(2);
  auto eps = random_episodes(rng, 200);
  double mean = 0.0;
  for (auto& e : eps) {
    for (auto& s : e.steps) {
      s.p = {0.1, 0.2, 0.3, 0.4};
      s.q_taken = s.p[s.action];
    }
    mean += e.ret;
  }
  mean /= 200.0;
  const auto r = is_value(eps);
  EXPECT_EQ(r.values.size(), 200u);
  EXPECT_NEAR(r.mean, mean, 1e-15);
}

TEST(Ope, UnsupportedTargetIsDegenerate) {
  Rng rng(3);
  auto eps = random_episodes(rng, 20);
  for (auto& e : eps)
    for (auto& s : e.steps) {
      s.p = {0, 0, 0, 0};
      s.p[(s.action + 1) % 4] = 1.0;
    }
  const auto r = is_value(eps);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.excluded, 20u);
  EXPECT_TRUE(r.values.empty());
}

TEST(Ope, ZeroPropensityEpisodesAreExcluded) {
  Rng rng(4);
  auto eps = random_episodes(rng, 10);
  eps[3].steps[0].q_taken = 0.0;
  const auto r = dr_value(eps);
  EXPECT_EQ(r.excluded, 1u);
  EXPECT_EQ(r.values.size(), 9u);
  EXPECT_FALSE(r.degenerate);
}

TEST(Ope, DrWithZeroQhatIsPerDecisionIs) {
  Rng rng(5);
  auto eps = random_episodes(rng, 300);
  for (auto& e : eps)
    for (auto& s : e.steps) s.qhat = {0, 0, 0, 0};
  for (double gamma : {1.0, 0.99, 0.7}) {
    for (bool clip : {false, true}) {
      OpeConfig cfg;
      cfg.gamma = gamma;
      cfg.clip = clip;
      const auto r = dr_value(eps, cfg);
      for (std::size_t i = 0; i < eps.size(); ++i) EXPECT_NEAR(r.values[i], per_decision_is(eps[i], cfg), 1e-12);
    }
  }
}

TEST(Ope, SingleStepBaseCase) {
  OpeEpisode e;
  OpeStep s;
  s.action = 1;
  s.q_taken = 0.3;
  s.p = {0.2, 0.3, 0.1, 0.4};
  s.reward = 0.25;
  s.qhat = {0.1, 0.25, -0.2, 0.05};
  e.steps = {s};
  const double vhat = 0.2 * 0.1 + 0.3 * 0.25 + 0.1 * -0.2 + 0.4 * 0.05;
  const auto r = dr_value({e});
  EXPECT_NEAR(r.values[0], vhat, 1e-15);
}

TEST(Ope, ResultMomentsAreArithmetic) {
  Rng rng(6);
  const auto eps = random_episodes(rng, 50);
  const auto r = is_value(eps);
  double s = 0.0;
  for (double v : r.values) s += v;
  EXPECT_NEAR(r.mean, s / static_cast<double>(r.values.size()), 1e-15);
}

TEST(Ope, TwoStateMdpEstimatesNearExactValue) {
  const TwoStateMdp mdp;
  Rng rng(7);
  const auto is_eps = mdp.sample(10000, rng, false);
  EXPECT_NEAR(is_value(is_eps).mean, mdp.exact_normalized_value(), 0.05);
  const auto dr_eps = mdp.sample(1000, rng, true);
  EXPECT_NEAR(dr_value(dr_eps).mean, mdp.exact_discounted_value(), 0.02);
}

TEST(Ope, ExactQDrBeatsIsOnVariance) {
  const TwoStateMdp mdp;
  Rng rng(8);
  std::vector<double> is_means, dr_means;
  for (int rep = 0; rep < 100; ++rep) {
    // Both estimators see the same episodes and target the discounted sum.
    const auto eps = mdp.sample(1000, rng, true, TwoStateMdp::Returns::Discounted);
    is_means.push_back(is_value(eps).mean);
    dr_means.push_back(dr_value(eps).mean);
  }
  auto var = [](const std::vector<double>& v) {
    double m = 0.0, s = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
  };
  EXPECT_LT(var(dr_means), var(is_means));
}

TEST(Ope, QhatRecoversConstantReward) {
  Rng rng(9);
  std::vector<std::vector<double>> x;
  std::vector<std::size_t> a;
  std::vector<double> y;
  for (int i = 0; i < 300; ++i) {
    x.push_back({rng.normal(), rng.uniform(0, 100), rng.uniform()});
    a.push_back(i % 3);
    y.push_back(0.35);
  }
  const auto m = fit_qhat(x, a, y);
  EXPECT_TRUE(m.empty[3]);
  EXPECT_FALSE(m.empty[0]);
  for (const auto& row : x) {
    const auto q = m.predict(row);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(q[k], 0.35, 1e-6);
    EXPECT_EQ(q[3], 0.0);
  }
}

TEST(Ope, QhatSingleActionFlagsOthers) {
  std::vector<std::vector<double>> x = {{1.0}, {2.0}, {3.0}};
  std::vector<std::size_t> a = {2, 2, 2};
  std::vector<double> y = {1.0, 2.0, 3.0};
  const auto m = fit_qhat(x, a, y);
  EXPECT_TRUE(m.empty[0] && m.empty[1] && m.empty[3]);
  EXPECT_EQ(m.samples[2], 3u);
  // One feature, λ = 1: slope = Sxy / (Sxx + 1) = 2 / 3.
  EXPECT_NEAR(m.weights[2][0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.bias[2], 2.0 - 2.0 / 3.0 * 2.0, 1e-12);
}

TEST(Ope, ValueEstimateIsConvexCombination) {
  Rng rng(10);
  for (const auto& e : random_episodes(rng, 100))
    for (const auto& s : e.steps) {
      double v = 0.0;
      for (std::size_t k = 0; k < 4; ++k) v += s.p[k] * s.qhat[k];
      EXPECT_GE(v, *std::min_element(s.qhat.begin(), s.qhat.end()) - 1e-15);
      EXPECT_LE(v, *std::max_element(s.qhat.begin(), s.qhat.end()) + 1e-15);
    }
}

TEST(Kde, DensitiesIntegrateToOne) {
  Rng rng(11);
  std::vector<double> b, o;
  for (int i = 0; i < 400; ++i) b.push_back(rng.normal(-0.1, 0.05));
  for (int i = 0; i < 30; ++i) o.push_back(rng.normal(0.3, 0.4));
  const auto k = kde_summary(b, o);
  EXPECT_NEAR(trapezoid(k.x, k.density_behavioral), 1.0, 1e-3);
  EXPECT_NEAR(trapezoid(k.x, k.density_optimal), 1.0, 1e-3);
  EXPECT_GE(k.x.size(), 512u);
  const double sd = std::sqrt(k.var_behavioral * 400.0 / 399.0);
  EXPECT_NEAR(k.bandwidth_behavioral, sd * std::pow(400.0, -0.2), 1e-15);
  EXPECT_NEAR(k.kde_var_behavioral, k.var_behavioral + k.bandwidth_behavioral * k.bandwidth_behavioral, 1e-15);
}

TEST(Kde, IdenticalInputsGiveIdenticalCurves) {
  Rng rng(12);
  std::vector<double> v;
  for (int i = 0; i < 50; ++i) v.push_back(rng.uniform(-1, 1));
  const auto k = kde_summary(v, v);
  EXPECT_EQ(k.density_behavioral, k.density_optimal);
  EXPECT_TRUE(k.warnings.empty());
  EXPECT_EQ(serialize_kde(k).substr(0, 36), "x,density_behavioral,density_optimal");
}

TEST(Kde, ZeroVarianceWarnsButStaysNormalized) {
  std::vector<double> flat(20, -0.1), v;
  Rng rng(13);
  for (int i = 0; i < 20; ++i) v.push_back(rng.normal());
  const auto k = kde_summary(flat, v);
  EXPECT_EQ(k.warnings.size(), 1u);
  EXPECT_NEAR(trapezoid(k.x, k.density_behavioral), 1.0, 1e-3);
  EXPECT_THROW(kde_summary(std::vector<double>(1, 0.0), v), ValidationError);
}

}  // namespace
