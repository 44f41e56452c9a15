#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>

#include "possession_rl/state_builder.hpp"
#include "possession_rl/synthetic.hpp"

using namespace prl;

namespace {

Event action_at(double x, double y, Action a = Action::Pass, double t = 100.0) {
  Event e;
  e.match_id = "m1";
  e.team = Team::Home;
  e.player_id = "h4";
  e.action = a;
  e.x_start = x;
  e.y_start = y;
  e.x_end = x;
  e.y_end = y;
  e.time_s = t;
  return e;
}

Possession possession_of(std::size_t n_actions, EndingAction ending) {
  Possession p;
  p.match_id = "m1";
  for (std::size_t k = 0; k < n_actions; ++k)
    p.actions.push_back(action_at(10.0 + static_cast<double>(k), 34.0,
                                  k % 2 ? Action::Dribble : Action::Pass, 10.0 * static_cast<double>(k)));
  p.ending = ending;
  p.ending_event = action_at(60, 34, Action::Foul);
  return p;
}

std::vector<ActionFeatures> features_of(const Possession& p) {
  std::vector<ActionFeatures> f;
  for (const auto& e : p.actions) f.push_back(extract_features(e));
  return f;
}

struct Corpus {
  SyntheticCorpus raw;
  std::vector<Possession> possessions;
};

const Corpus& small_corpus() {
  static const Corpus c = [] {
    SyntheticConfig cfg;
    cfg.n_matches = 2;
    Corpus out{generate_synthetic_corpus(cfg), {}};
    out.possessions = segment_possessions(out.raw.events);
    return out;
  }();
  return c;
}

}  // namespace

TEST(Features, DistanceAndAngle) {
  auto f = extract_features(action_at(94, 34));
  EXPECT_DOUBLE_EQ(f.distance_to_goal, 11.0);
  // Half-angle of the goal mouth seen from 11 m straight out, doubled.
  EXPECT_NEAR(f.angle_to_goal, 2.0 * std::atan(3.66 / 11.0), 1e-12);
  auto g = extract_features(action_at(105, 34));
  EXPECT_DOUBLE_EQ(g.distance_to_goal, 0.0);
  EXPECT_NEAR(g.angle_to_goal, std::numbers::pi, 1e-12);
}

TEST(Features, TimeRemaining) {
  EXPECT_DOUBLE_EQ(extract_features(action_at(50, 34, Action::Pass, 0.0)).time_remaining, 2700.0);
  auto late = extract_features(action_at(50, 34, Action::Pass, 2800.0));
  EXPECT_DOUBLE_EQ(late.time_remaining, 0.0);
  EXPECT_TRUE(late.time_clamped);
}

TEST(Features, CategoricalColumns) {
  Event e = action_at(50, 34);
  e.team = Team::Away;
  e.result = ActionResult::Unsuccessful;
  e.body = BodyPart::Head;
  auto f = extract_features(e);
  EXPECT_EQ(f.home_away, 0.0);
  EXPECT_EQ(f.action_result, 0.0);
  EXPECT_EQ(f.body_id, 0.0);
  e.body = BodyPart::Foot;
  EXPECT_EQ(extract_features(e).body_id, 2.0);
}

TEST(Features, AngleWithinRangeOnGrid) {
  for (double x = 0; x <= 105; x += 2.5)
    for (double y = 0; y <= 68; y += 2.5) {
      const double a = pitch::angle_to_goal(x, y);
      ASSERT_GE(a, 0.0);
      ASSERT_LE(a, std::numbers::pi);
    }
}

TEST(States, Widths) {
  EXPECT_EQ(state_width(StateType::I), 17u);
  EXPECT_EQ(state_width(StateType::II), 61u);
  EXPECT_EQ(state_width(StateType::III), 20u);
}

TEST(States, ShortPossessionIsTailPadded) {
  auto p = possession_of(3, EndingAction::Shot);
  auto s = build_state(p, StateType::I, features_of(p));
  EXPECT_EQ(s.true_length, 3u);
  EXPECT_EQ(s.label, EndingAction::Shot);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(s.at(r, 6 + index(p.actions[r].action)), 1.0f);
  for (std::size_t r = 3; r < kMaxActions; ++r)
    for (std::size_t c = 0; c < s.width; ++c) EXPECT_EQ(s.at(r, c), 0.0f);
}

TEST(States, LongPossessionKeepsLastTen) {
  auto p = possession_of(14, EndingAction::Foul);
  auto s = build_state(p, StateType::I, features_of(p));
  EXPECT_EQ(s.true_length, 10u);
  EXPECT_EQ(s.label, EndingAction::Foul);
  // Actions 5..14 (1-based) start at x = 14..23, so row r sits 91 - r metres from goal.
  for (std::size_t r = 0; r < kMaxActions; ++r)
    EXPECT_FLOAT_EQ(s.at(r, 1), static_cast<float>(105.0 - (14.0 + static_cast<double>(r))));
}

TEST(States, EndingOnlyPossessionIsAllPadding) {
  auto p = possession_of(0, EndingAction::Shot);
  auto s = build_state(p, StateType::III, features_of(p));
  EXPECT_EQ(s.true_length, 0u);
  for (float v : s.tensor) EXPECT_EQ(v, 0.0f);
}

TEST(States, MissingContextIsError) {
  auto p = possession_of(2, EndingAction::Out);
  EXPECT_THROW(build_state(p, StateType::III, features_of(p)), ValidationError);
  EXPECT_THROW(build_state(p, StateType::II, features_of(p)), ValidationError);
}

TEST(States, SyntheticCorpusInvariantsAllTypes) {
  const auto& c = small_corpus();
  TrackingIndex tracking(&c.raw.frames);
  std::map<StateType, StateTensor> tensors;
  for (StateType t : {StateType::I, StateType::II, StateType::III}) {
    std::vector<PossessionState> states;
    for (const auto& p : c.possessions) states.push_back(build_state(p, t, tracking));
    tensors[t] = stack_states(states, t);
    const auto shape = tensors[t].shape();
    EXPECT_EQ(shape[0], c.possessions.size());
    EXPECT_EQ(shape[1], 10u);
    EXPECT_EQ(shape[2], state_width(t));
    std::string why;
    EXPECT_TRUE(check_state_invariants(tensors[t], &why)) << why;
  }
  // The hand-crafted columns and the action one-hot do not depend on the state type.
  const auto& a = tensors[StateType::II];
  const auto& b = tensors[StateType::III];
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t r = 0; r < kMaxActions; ++r) {
      for (std::size_t col = 0; col < 6; ++col) ASSERT_EQ(a.at(i, r, col), b.at(i, r, col));
      for (std::size_t k = 0; k < kActionCount; ++k) ASSERT_EQ(a.at(i, r, 50 + k), b.at(i, r, 9 + k));
    }
  // Pressure counts sum to 11 on populated rows; locations lie in [0, 1].
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t r = 0; r < b.lengths[i]; ++r) {
      ASSERT_EQ(b.at(i, r, 6) + b.at(i, r, 7) + b.at(i, r, 8), 11.0f);
      for (std::size_t col = 6; col < 50; ++col) {
        ASSERT_GE(a.at(i, r, col), 0.0f);
        ASSERT_LE(a.at(i, r, col), 1.0f);
      }
    }
}

TEST(States, RebuildIsBitIdentical) {
  const auto& c = small_corpus();
  TrackingIndex t1(&c.raw.frames), t2(&c.raw.frames);
  for (std::size_t i = 0; i < std::min<std::size_t>(50, c.possessions.size()); ++i) {
    auto a = build_state(c.possessions[i], StateType::III, t1);
    auto b = build_state(c.possessions[i], StateType::III, t2);
    EXPECT_EQ(a.tensor, b.tensor);
  }
}

TEST(States, PrecomputedPressureMatchesOnDemand) {
  const auto& c = small_corpus();
  TrackingIndex lazy(&c.raw.frames), given(&c.raw.frames);
  given.set_pressures(compute_frame_pressures(c.raw.frames));
  for (std::size_t i = 0; i < std::min<std::size_t>(80, c.possessions.size()); ++i)
    EXPECT_EQ(build_state(c.possessions[i], StateType::III, lazy).tensor,
              build_state(c.possessions[i], StateType::III, given).tensor);
}

TEST(States, TensorDumpRoundTrip) {
  const auto& c = small_corpus();
  TrackingIndex tracking(&c.raw.frames);
  std::vector<PossessionState> states;
  for (const auto& p : c.possessions) states.push_back(build_state(p, StateType::III, tracking));
  auto t = stack_states(states, StateType::III);
  const auto dir = std::filesystem::temp_directory_path();
  const auto tp = (dir / "prl_states.bin").string(), lp = (dir / "prl_labels.txt").string();
  write_tensor(tp, lp, t);
  const auto raw = text::read_file(tp);
  EXPECT_EQ(raw.substr(0, raw.find('\n')), std::to_string(t.size()) + ",10,20");
  auto back = read_tensor(tp, lp);
  std::filesystem::remove(tp);
  std::filesystem::remove(lp);
  EXPECT_EQ(back.data, t.data);
  EXPECT_EQ(back.labels, t.labels);
  EXPECT_EQ(back.lengths, t.lengths);
  EXPECT_EQ(back.type, StateType::III);
}
