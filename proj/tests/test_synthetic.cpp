#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <set>

#include "possession_rl/synthetic.hpp"

using namespace prl;

TEST(Synthetic, SameSeedIsByteIdentical) {
  SyntheticConfig cfg;
  cfg.n_matches = 2;
  auto a = generate_synthetic_corpus(cfg);
  auto b = generate_synthetic_corpus(cfg);
  EXPECT_EQ(serialize_events(a.events), serialize_events(b.events));
  EXPECT_EQ(serialize_frames(a.frames), serialize_frames(b.frames));
  EXPECT_EQ(ground_truth_json(a.truth).dump(), ground_truth_json(b.truth).dump());
  cfg.seed += 1;
  auto c = generate_synthetic_corpus(cfg);
  EXPECT_NE(serialize_events(a.events), serialize_events(c.events));
}

TEST(Synthetic, MatchStreamsAreIndependentOfCorpusSize) {
  SyntheticConfig cfg;
  cfg.n_matches = 3;
  auto corpus = generate_synthetic_corpus(cfg);
  auto third = generate_synthetic_match(cfg, 2);
  std::vector<Event> tail;
  for (const auto& e : corpus.events)
    if (e.match_id == "m003") tail.push_back(e);
  EXPECT_EQ(tail, third.events);
}

TEST(Synthetic, PaperScaleMatchCount) {
  SyntheticConfig cfg;
  cfg.possessions_per_half = 2;
  auto corpus = generate_synthetic_corpus(cfg);
  std::set<std::string> ids;
  for (const auto& e : corpus.events) ids.insert(e.match_id);
  EXPECT_EQ(ids.size(), 104u);
}

TEST(Synthetic, EventsAndFramesRespectInvariants) {
  SyntheticConfig cfg;
  cfg.n_matches = 3;
  auto corpus = generate_synthetic_corpus(cfg);
  for (std::size_t i = 0; i < corpus.events.size(); ++i) {
    const auto& e = corpus.events[i];
    ASSERT_TRUE(pitch::in_bounds(e.x_start, e.y_start));
    ASSERT_TRUE(pitch::in_bounds(e.x_end, e.y_end));
    ASSERT_GE(e.time_s, 0.0);
    if (i > 0 && corpus.events[i - 1].match_id == e.match_id && corpus.events[i - 1].half == e.half) {
      ASSERT_GE(e.time_s, corpus.events[i - 1].time_s);
    }
  }
  for (const auto& f : corpus.frames) {
    ASSERT_TRUE(f.ball_holder.has_value());
    ASSERT_NE(f.find(*f.ball_holder), nullptr);
    for (const auto& p : f.players) ASSERT_TRUE(pitch::in_bounds(p.x, p.y));
  }
}

TEST(Synthetic, UniformBehaviorFrequencies) {
  SyntheticConfig cfg;
  cfg.behavioral_skew = uniform_behavior();
  cfg.n_matches = 115;
  auto corpus = generate_synthetic_corpus(cfg);
  const auto& ps = corpus.truth.possessions;
  ASSERT_GE(ps.size(), 10000u);
  std::array<double, 4> count{};
  const std::size_t n = 10000;
  for (std::size_t i = 0; i < n; ++i) count[index(ps[i].ending)] += 1.0;
  for (double c : count) EXPECT_NEAR(c / n, 0.25, 0.02);
}

TEST(Synthetic, PlantedFrequenciesPassChiSquare) {
  SyntheticConfig cfg;
  cfg.n_matches = 115;
  auto corpus = generate_synthetic_corpus(cfg);
  std::map<std::string, std::array<double, 4>> counts;
  const std::size_t n = 10000;
  ASSERT_GE(corpus.truth.possessions.size(), n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = corpus.truth.possessions[i];
    counts[p.context][index(p.ending)] += 1.0;
  }
  double chi2 = 0.0;
  int dof = 0;
  for (const auto& [ctx, c] : counts) {
    const auto& probs = cfg.behavioral_skew.at(ctx);
    const double total = c[0] + c[1] + c[2] + c[3];
    for (std::size_t a = 0; a < 4; ++a) {
      const double expected = total * probs[a];
      chi2 += (c[a] - expected) * (c[a] - expected) / expected;
    }
    dof += 3;
  }
  boost::math::chi_squared dist(dof);
  const double p_value = 1.0 - boost::math::cdf(dist, chi2);
  EXPECT_GT(p_value, 0.01) << "chi2=" << chi2 << " dof=" << dof;
}

TEST(Synthetic, InvalidConfigRejected) {
  SyntheticConfig cfg;
  cfg.behavioral_skew["mid|low"] = {0.5, 0.5, 0.5, 0.0};
  EXPECT_THROW(generate_synthetic_corpus(cfg), ValidationError);
  cfg = SyntheticConfig{};
  cfg.behavioral_skew.erase("far|high");
  EXPECT_THROW(generate_synthetic_corpus(cfg), ValidationError);
}

TEST(Synthetic, PlantedShotsFollowGoalModel) {
  PlantedGoalModel m;
  auto shots = sample_planted_shots(m, 20000, 3);
  double goals = 0.0, expected = 0.0;
  for (const auto& s : shots) {
    goals += s.goal;
    expected += s.probability;
    ASSERT_GT(s.probability, 0.0);
    ASSERT_LT(s.probability, 1.0);
  }
  EXPECT_NEAR(goals, expected, 4.0 * std::sqrt(expected));
}
