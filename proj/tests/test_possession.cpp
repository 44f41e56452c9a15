#include <gtest/gtest.h>

#include <set>

#include "possession_rl/possession.hpp"
#include "possession_rl/synthetic.hpp"

using namespace prl;

namespace {

Event ev(Team team, Action a, double t, int half = 1, const std::string& match = "m1") {
  Event e;
  e.match_id = match;
  e.team = team;
  e.player_id = team == Team::Home ? "h5" : "a5";
  e.action = a;
  e.x_start = e.x_end = 50;
  e.y_start = e.y_end = 34;
  e.time_s = t;
  e.half = half;
  return e;
}

constexpr Team H = Team::Home;
constexpr Team A = Team::Away;

Possession poss(Team team, EndingAction ending, const std::string& match = "m1", int half = 1) {
  Possession p;
  p.match_id = match;
  p.team = team;
  p.ending = ending;
  p.half = half;
  return p;
}

}  // namespace

TEST(Segment, SingleOpponentTouchKeepsPossession) {
  std::vector<Event> events = {ev(H, Action::Pass, 1), ev(H, Action::Pass, 2), ev(A, Action::Tackle, 3),
                               ev(H, Action::Pass, 4)};
  auto ps = segment_possessions(events);
  ASSERT_EQ(ps.size(), 1u);
  EXPECT_EQ(ps[0].team, H);
  EXPECT_EQ(ps[0].interruptions.size(), 1u);
  EXPECT_EQ(ps[0].interruption_indices, std::vector<std::size_t>{2});
}

TEST(Segment, ThreeOpponentEventsTransferWithError) {
  std::vector<Event> events = {ev(H, Action::Pass, 1), ev(A, Action::Interception, 2),
                               ev(A, Action::Pass, 3), ev(A, Action::Pass, 4)};
  auto ps = segment_possessions(events);
  ASSERT_EQ(ps.size(), 2u);
  EXPECT_EQ(ps[0].team, H);
  EXPECT_EQ(ps[0].ending, EndingAction::Error);
  EXPECT_EQ(ps[0].ending_index, 0u);
  EXPECT_EQ(ps[0].length(), 1u);
  EXPECT_EQ(ps[1].team, A);
  EXPECT_EQ(ps[1].action_indices, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(ps[1].ending_index, 3u);
}

TEST(Segment, SingleShot) {
  auto ps = segment_possessions({ev(H, Action::Shot, 1)});
  ASSERT_EQ(ps.size(), 1u);
  EXPECT_EQ(ps[0].length(), 1u);
  EXPECT_EQ(ps[0].ending, EndingAction::Shot);
  EXPECT_TRUE(ps[0].actions.empty());
}

TEST(Segment, EmptyInput) { EXPECT_TRUE(segment_possessions({}).empty()); }

TEST(Segment, OwnerTerminatorsMapToEndings) {
  std::vector<Event> events = {ev(H, Action::Pass, 1),     ev(H, Action::BallOut, 2),
                               ev(H, Action::Pass, 3),     ev(H, Action::Foul, 4),
                               ev(H, Action::Clearance, 5), ev(H, Action::BadBallControl, 6)};
  auto ps = segment_possessions(events);
  ASSERT_EQ(ps.size(), 4u);
  EXPECT_EQ(ps[0].ending, EndingAction::Out);
  EXPECT_EQ(ps[0].actions.size(), 1u);
  EXPECT_EQ(ps[1].ending, EndingAction::Foul);
  EXPECT_EQ(ps[2].ending, EndingAction::Error);
  EXPECT_EQ(ps[3].ending, EndingAction::Error);
  for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_EQ(ps[i].possession_id, i + 1);
}

TEST(Segment, OpponentTerminatorEndsPossession) {
  // A single opponent clearance closes the run: the home side lost the ball.
  std::vector<Event> events = {ev(H, Action::Pass, 1), ev(H, Action::Pass, 2), ev(A, Action::Clearance, 3)};
  auto ps = segment_possessions(events);
  ASSERT_EQ(ps.size(), 2u);
  EXPECT_EQ(ps[0].ending, EndingAction::Error);
  EXPECT_EQ(ps[0].ending_index, 1u);
  EXPECT_EQ(ps[1].team, A);
  EXPECT_EQ(ps[1].ending, EndingAction::Error);
  EXPECT_EQ(ps[1].ending_index, 2u);
}

TEST(Segment, PeriodEndClosesOpenPossession) {
  std::vector<Event> events = {ev(H, Action::Pass, 1), ev(H, Action::Dribble, 2),
                               ev(A, Action::Pass, 1, 2), ev(A, Action::Shot, 2, 2)};
  auto ps = segment_possessions(events);
  ASSERT_EQ(ps.size(), 2u);
  EXPECT_EQ(ps[0].ending, EndingAction::Error);
  EXPECT_EQ(ps[0].ending_index, 1u);
  EXPECT_EQ(ps[0].half, 1);
  EXPECT_EQ(ps[1].team, A);
  EXPECT_EQ(ps[1].ending, EndingAction::Shot);
  EXPECT_EQ(ps[1].half, 2);
}

TEST(Segment, EveryEventBelongsToExactlyOnePossession) {
  SyntheticConfig cfg;
  cfg.n_matches = 3;
  auto corpus = generate_synthetic_corpus(cfg);
  auto events = parse_events(serialize_events(corpus.events));
  auto ps = segment_possessions(events);
  std::vector<int> seen(events.size(), 0);
  for (const auto& p : ps) {
    for (auto i : p.action_indices) {
      ++seen[i];
      EXPECT_EQ(events[i].team, p.team);
    }
    for (auto i : p.interruption_indices) {
      ++seen[i];
      EXPECT_NE(events[i].team, p.team);
    }
    ++seen[p.ending_index];
    EXPECT_GE(p.length(), 1u);
  }
  for (std::size_t i = 0; i < seen.size(); ++i) ASSERT_EQ(seen[i], 1) << "event " << i;
}

TEST(Segment, RecoversPlantedPossessions) {
  SyntheticConfig cfg;
  cfg.n_matches = 4;
  auto corpus = generate_synthetic_corpus(cfg);
  auto ps = segment_possessions(corpus.events);
  const auto& planted = corpus.truth.possessions;
  ASSERT_EQ(ps.size(), planted.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ASSERT_EQ(ps[i].team, planted[i].team) << i;
    ASSERT_EQ(ps[i].ending, planted[i].ending) << i;
    ASSERT_EQ(ps[i].actions.size(), planted[i].n_actions) << i;
  }
}

TEST(Segment, DumpRoundTrip) {
  SyntheticConfig cfg;
  cfg.n_matches = 2;
  auto corpus = generate_synthetic_corpus(cfg);
  auto ps = segment_possessions(corpus.events);
  const auto offsets = match_offsets(corpus.events);
  const auto text = serialize_possessions(ps, offsets);
  auto back = parse_possessions(text, corpus.events);
  ASSERT_EQ(back.size(), ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    EXPECT_EQ(back[i].action_indices, ps[i].action_indices);
    EXPECT_EQ(back[i].interruption_indices, ps[i].interruption_indices);
    EXPECT_EQ(back[i].ending_index, ps[i].ending_index);
    EXPECT_EQ(back[i].ending, ps[i].ending);
    EXPECT_EQ(back[i].possession_id, ps[i].possession_id);
    EXPECT_EQ(back[i].actions, ps[i].actions);
  }
  EXPECT_EQ(serialize_possessions(back, offsets), text);
}

TEST(Episodes, KeepThenShot) {
  std::vector<Possession> ps = {poss(H, EndingAction::Foul), poss(H, EndingAction::Shot)};
  auto eps = build_episodes(ps, H);
  ASSERT_EQ(eps.size(), 1u);
  EXPECT_EQ(eps[0].horizon(), 2u);
  EXPECT_EQ(eps[0].terminal, EpisodeTerminal::Shot);
}

TEST(Episodes, ErrorThenOpponentIsLoss) {
  std::vector<Possession> ps = {poss(H, EndingAction::Error), poss(A, EndingAction::Out)};
  auto eps = build_episodes(ps, H);
  ASSERT_EQ(eps.size(), 1u);
  EXPECT_EQ(eps[0].horizon(), 1u);
  EXPECT_EQ(eps[0].terminal, EpisodeTerminal::Loss);
}

TEST(Episodes, HalfBoundaryClosesEpisode) {
  std::vector<Possession> ps = {poss(H, EndingAction::Out, "m1", 1), poss(H, EndingAction::Out, "m1", 2)};
  auto eps = build_episodes(ps, H);
  ASSERT_EQ(eps.size(), 2u);
  EXPECT_EQ(eps[0].terminal, EpisodeTerminal::Loss);
}

// Start -> Keep* -> {Loss | Shot}: only the final possession may be a shot, and a
// non-final possession must have kept the ball (out or foul).
static bool accepted_by_automaton(const Episode& e) {
  for (std::size_t i = 0; i < e.possessions.size(); ++i) {
    const auto end = e.possessions[i].ending;
    const bool last = i + 1 == e.possessions.size();
    if (!last && !(end == EndingAction::Out || end == EndingAction::Foul)) return false;
    if (last && end == EndingAction::Shot && e.terminal != EpisodeTerminal::Shot) return false;
  }
  return true;
}

TEST(Episodes, PartitionAndAutomatonOnSyntheticCorpus) {
  SyntheticConfig cfg;
  cfg.n_matches = 5;
  auto corpus = generate_synthetic_corpus(cfg);
  auto ps = segment_possessions(corpus.events);
  for (Team team : {H, A}) {
    auto eps = build_episodes(ps, team);
    std::vector<std::size_t> flat;
    for (const auto& e : eps) {
      EXPECT_TRUE(accepted_by_automaton(e));
      for (const auto& p : e.possessions) {
        EXPECT_EQ(p.team, team);
        flat.push_back(p.ending_index);
      }
    }
    std::vector<std::size_t> expected;
    for (const auto& p : ps)
      if (p.team == team) expected.push_back(p.ending_index);
    EXPECT_EQ(flat, expected);
  }
}
