#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "possession_rl/match_data.hpp"
#include "possession_rl/pitch.hpp"
#include "possession_rl/random.hpp"

namespace prl {

/// Planted logistic goal model over (angle, distance, time_remaining, home_away, body_id).
struct PlantedGoalModel {
  double bias = -2.6;
  double angle = 1.5;
  double distance = -0.05;
  double time_remaining = -4e-4;
  double home_away = 0.7;
  double body = 0.55;

  std::array<double, 6> coefficients() const {
    return {bias, angle, distance, time_remaining, home_away, body};
  }

  double probability(double angle_rad, double dist, double time_rem, double home,
                     double body_id) const {
    const double z = bias + angle * angle_rad + distance * dist + time_remaining * time_rem +
                     home_away * home + body * body_id;
    return 1.0 / (1.0 + std::exp(-z));
  }
};

enum class Zone { Near, Mid, Far };

inline Zone zone_of(double x, double y) {
  const double d = pitch::distance_to_goal(x, y);
  if (d < 25.0) return Zone::Near;
  if (d < 55.0) return Zone::Mid;
  return Zone::Far;
}

inline std::string context_key(Zone z, bool high_pressure) {
  const char* zn = z == Zone::Near ? "near" : (z == Zone::Mid ? "mid" : "far");
  return std::string(zn) + (high_pressure ? "|high" : "|low");
}

inline std::vector<std::string> all_context_keys() {
  std::vector<std::string> keys;
  for (Zone z : {Zone::Near, Zone::Mid, Zone::Far})
    for (bool hp : {false, true}) keys.push_back(context_key(z, hp));
  return keys;
}

using BehaviorTable = std::map<std::string, Distribution4>;

/// Error-heavy behaviour: losing the ball is the most frequent ending everywhere.
inline BehaviorTable suboptimal_behavior() {
  return {
      {"near|low", {0.30, 0.10, 0.10, 0.50}}, {"near|high", {0.20, 0.15, 0.15, 0.50}},
      {"mid|low", {0.10, 0.15, 0.15, 0.60}},  {"mid|high", {0.05, 0.15, 0.20, 0.60}},
      {"far|low", {0.02, 0.20, 0.18, 0.60}},  {"far|high", {0.02, 0.18, 0.20, 0.60}},
  };
}

inline BehaviorTable uniform_behavior() {
  BehaviorTable t;
  for (const auto& k : all_context_keys()) t[k] = {0.25, 0.25, 0.25, 0.25};
  return t;
}

struct SyntheticConfig {
  std::size_t n_matches = 104;
  std::uint64_t seed = 7;
  BehaviorTable behavioral_skew = suboptimal_behavior();
  PlantedGoalModel goal_model;
  double keep_prob_out = 0.6;
  double keep_prob_foul = 0.8;
  double high_pressure_prob = 0.4;
  std::size_t possessions_per_half = 45;
  double interruption_prob = 0.12;
  double action_stop_prob = 0.2;  // geometric stop probability for possession length
  std::size_t max_actions = 16;

  void validate() const {
    if (n_matches == 0) throw ValidationError("n_matches must be positive");
    if (possessions_per_half == 0) throw ValidationError("possessions_per_half must be positive");
    for (const auto& key : all_context_keys()) {
      auto it = behavioral_skew.find(key);
      if (it == behavioral_skew.end()) throw ValidationError("behavioral_skew missing context " + key);
      double s = 0.0;
      for (double p : it->second) {
        if (!(p >= 0.0)) throw ValidationError("negative probability in context " + key);
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-9) throw ValidationError("probabilities of " + key + " must sum to 1");
    }
    for (double p : {keep_prob_out, keep_prob_foul, high_pressure_prob, interruption_prob,
                     action_stop_prob})
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("probability parameter outside [0,1]");
  }
};

struct PlantedPossession {
  std::string match_id;
  int half = 1;
  Team team = Team::Home;
  EndingAction ending = EndingAction::Error;
  std::string context;
  std::size_t n_actions = 0;
  bool high_pressure = false;
};

struct GroundTruth {
  BehaviorTable behavioral_skew;
  PlantedGoalModel goal_model;
  double keep_prob_out = 0.0;
  double keep_prob_foul = 0.0;
  std::vector<PlantedPossession> possessions;
};

struct SyntheticCorpus {
  std::vector<Event> events;
  std::vector<Frame> frames;
  GroundTruth truth;
};

inline std::string match_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "m%03zu", index + 1);
  return buf;
}

/// Frame timestamps run from match start; the second half is offset by one half length.
inline double frame_time(int half, double time_s) {
  return (half - 1) * pitch::kHalfLengthSeconds + time_s;
}

namespace detail {

inline double round_to(double v, double step) { return std::round(v / step) * step; }

inline double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

struct GeneratedEvent {
  Event event;
  std::size_t possession = 0;  // index into the match's planted possessions
};

class MatchSimulator {
 public:
  MatchSimulator(const SyntheticConfig& cfg, std::size_t match_index)
      : cfg_(cfg), rng_(derive_seed(cfg.seed, match_index)), match_(match_name(match_index)) {}

  void run(std::vector<Event>& events, std::vector<Frame>& frames,
           std::vector<PlantedPossession>& planted) {
    for (int half : {1, 2}) {
      generated_.clear();
      planted_.clear();
      simulate_half(half);
      build_frames(half, frames);
      for (auto& g : generated_) events.push_back(g.event);
      for (auto& p : planted_) planted.push_back(p);
    }
  }

 private:
  std::string player(Team t, std::size_t slot) const {
    return std::string(t == Team::Home ? "h" : "a") + std::to_string(slot);
  }

  std::size_t outfield_slot() { return 2 + rng_.uniform_index(10); }

  void emit(Team team, std::size_t slot, Action a, double xs, double ys, double xe, double ye,
            ActionResult r, BodyPart b, double dt, int half) {
    t_ += dt;
    Event e;
    e.match_id = match_;
    e.team = team;
    e.player_id = player(team, slot);
    e.action = a;
    e.x_start = round_to(clampd(xs, 0.0, pitch::kLength), 0.1);
    e.y_start = round_to(clampd(ys, 0.0, pitch::kWidth), 0.1);
    e.x_end = round_to(clampd(xe, 0.0, pitch::kLength), 0.1);
    e.y_end = round_to(clampd(ye, 0.0, pitch::kWidth), 0.1);
    e.result = r;
    e.body = b;
    e.time_s = round_to(t_, 0.1);
    e.half = half;
    generated_.push_back({std::move(e), planted_.size() - 1});
  }

  // Brief opponent touches that do not transfer the possession.
  void interruption(Team owner, double x, double y, int half) {
    const std::size_t n = 1 + rng_.uniform_index(2);
    const Team opp = other(owner);
    for (std::size_t k = 0; k < n; ++k) {
      const Action a = rng_.bernoulli(0.5) ? Action::Tackle : Action::Interception;
      const double mx = pitch::mirror_x(x), my = pitch::mirror_y(y);
      emit(opp, outfield_slot(), a, mx, my, mx + rng_.normal(0, 2), my + rng_.normal(0, 2),
           ActionResult::Unsuccessful, BodyPart::Foot, rng_.uniform(0.6, 1.4), half);
    }
  }

  BodyPart sample_body() {
    const double u = rng_.uniform();
    if (u < 0.15) return BodyPart::Head;
    if (u < 0.25) return BodyPart::Body;
    return BodyPart::Foot;
  }

  void simulate_half(int half) {
    t_ = 0.0;
    Team team = half == 1 ? Team::Home : Team::Away;
    bool turnover = true;
    bool after_error_transfer = false;
    bool allow_prelude = false;
    double sx = 52.5, sy = 34.0;

    for (std::size_t k = 0; k < cfg_.possessions_per_half; ++k) {
      if (t_ > pitch::kHalfLengthSeconds - 120.0) break;
      PlantedPossession pp;
      pp.match_id = match_;
      pp.half = half;
      pp.team = team;
      pp.high_pressure = rng_.bernoulli(cfg_.high_pressure_prob);
      planted_.push_back(pp);

      if (allow_prelude && rng_.bernoulli(0.2)) interruption(team, sx, sy, half);

      std::size_t n = 0;
      while (n < cfg_.max_actions && !rng_.bernoulli(cfg_.action_stop_prob)) ++n;
      if (after_error_transfer) n = std::max<std::size_t>(n, 1);

      double x = sx, y = sy;
      double dx = sx, dy = sy;  // start of the last non-ending action
      std::size_t events_so_far = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double xe = clampd(x + rng_.normal(5.0, 9.0), 1.0, 101.0);
        const double ye = clampd(y + rng_.normal(0.0, 9.0), 1.0, 67.0);
        Action a = Action::Pass;
        if (j == 0 && after_error_transfer) {
          a = rng_.bernoulli(0.5) ? Action::Interception : Action::Tackle;
        } else {
          const double u = rng_.uniform();
          if (u < 0.2) a = Action::Dribble;
          else if (u < 0.25) a = Action::Other;
          else if (x > 80.0 && std::abs(y - 34.0) > 18.0 && u < 0.6) a = Action::Cross;
        }
        emit(team, outfield_slot(), a, x, y, xe, ye, ActionResult::Successful, BodyPart::Foot,
             rng_.uniform(1.2, 3.2), half);
        ++events_so_far;
        dx = generated_.back().event.x_start;
        dy = generated_.back().event.y_start;
        x = generated_.back().event.x_end;
        y = generated_.back().event.y_end;
        const bool protected_start = turnover && events_so_far < 3;
        if (!protected_start && rng_.bernoulli(cfg_.interruption_prob)) interruption(team, x, y, half);
      }

      const bool high = planted_.back().high_pressure;
      const std::string ctx = context_key(zone_of(dx, dy), high);
      const auto& probs = cfg_.behavioral_skew.at(ctx);
      const auto ending = static_cast<EndingAction>(rng_.categorical(probs));
      planted_.back().context = ctx;
      planted_.back().ending = ending;
      planted_.back().n_actions = n;

      Team next = other(team);
      after_error_transfer = false;
      allow_prelude = false;
      switch (ending) {
        case EndingAction::Shot: {
          const BodyPart body = sample_body();
          const double dt = rng_.uniform(1.0, 2.5);
          const double shot_rem = std::max(0.0, pitch::kHalfLengthSeconds - round_to(t_ + dt, 0.1));
          const double ex = round_to(x, 0.1), ey = round_to(y, 0.1);
          const double p = cfg_.goal_model.probability(
              pitch::angle_to_goal(ex, ey), pitch::distance_to_goal(ex, ey), shot_rem,
              team == Team::Home ? 1.0 : 0.0, static_cast<double>(body));
          const bool goal = rng_.bernoulli(p);
          emit(team, outfield_slot(), Action::Shot, x, y, pitch::kLength,
               rng_.uniform(30.6, 37.4), goal ? ActionResult::Successful : ActionResult::Unsuccessful,
               body, dt, half);
          sx = goal ? 52.5 : 6.0;
          sy = 34.0;
          t_ += rng_.uniform(3.0, 6.0);
          break;
        }
        case EndingAction::Out: {
          emit(team, outfield_slot(), Action::BallOut, x, y, x + rng_.normal(0, 5),
               y < 34.0 ? 0.0 : pitch::kWidth, ActionResult::Unsuccessful, BodyPart::Foot,
               rng_.uniform(1.0, 2.5), half);
          if (rng_.bernoulli(cfg_.keep_prob_out)) {
            next = team;
            sx = x;
            sy = y < 34.0 ? 1.0 : 67.0;
            allow_prelude = true;
          } else {
            sx = pitch::mirror_x(x);
            sy = y < 34.0 ? 67.0 : 1.0;
          }
          t_ += rng_.uniform(2.0, 5.0);
          break;
        }
        case EndingAction::Foul: {
          emit(team, outfield_slot(), Action::Foul, x, y, x, y, ActionResult::Unsuccessful,
               BodyPart::Foot, rng_.uniform(1.0, 2.5), half);
          if (rng_.bernoulli(cfg_.keep_prob_foul)) {
            next = team;
            sx = x;
            sy = y;
            allow_prelude = true;
          } else {
            sx = pitch::mirror_x(x);
            sy = pitch::mirror_y(y);
          }
          t_ += rng_.uniform(2.0, 5.0);
          break;
        }
        case EndingAction::Error: {
          const bool run_ok = !turnover || n + 1 >= 3;
          if (run_ok && rng_.bernoulli(0.6)) {
            emit(team, outfield_slot(), rng_.bernoulli(0.7) ? Action::Pass : Action::Dribble, x, y,
                 x + rng_.normal(6, 6), y + rng_.normal(0, 8), ActionResult::Unsuccessful,
                 BodyPart::Foot, rng_.uniform(1.0, 2.5), half);
            const auto& last = generated_.back().event;
            sx = pitch::mirror_x(last.x_end);
            sy = pitch::mirror_y(last.y_end);
            after_error_transfer = true;
          } else {
            emit(team, outfield_slot(), Action::BadBallControl, x, y, x + rng_.normal(0, 2),
                 y + rng_.normal(0, 2), ActionResult::Unsuccessful, BodyPart::Foot,
                 rng_.uniform(1.0, 2.0), half);
            sx = pitch::mirror_x(x);
            sy = pitch::mirror_y(y);
          }
          break;
        }
      }
      sx = clampd(sx, 1.0, 104.0);
      sy = clampd(sy, 1.0, 67.0);
      turnover = next != team;
      team = next;
    }
  }

  // Position targets in home-attacking coordinates.
  static constexpr std::array<std::array<double, 2>, 11> kFormation = {{
      {5, 34}, {20, 10}, {20, 26}, {20, 42}, {20, 58}, {40, 12},
      {40, 28}, {40, 40}, {40, 56}, {60, 24}, {60, 44},
  }};

  void build_frames(int half, std::vector<Frame>& frames) {
    if (generated_.empty()) return;
    const double t_last = generated_.back().event.time_s;
    const auto seconds = static_cast<std::size_t>(std::ceil(t_last)) + 1;

    std::array<std::array<double, 2>, 22> pos{};
    std::array<std::array<double, 2>, 22> press_offset{};
    std::size_t offset_possession = static_cast<std::size_t>(-1);
    std::size_t ev = 0;
    for (std::size_t s = 0; s <= seconds; ++s) {
      const double ts = static_cast<double>(s);
      while (ev + 1 < generated_.size() && generated_[ev + 1].event.time_s <= ts) ++ev;
      const auto& g = generated_[ev];
      const Event& e = g.event;
      const PlantedPossession& pp = planted_[g.possession];

      // Ball and holder in home coordinates.
      const double frac = clampd((ts - e.time_s) / 2.0 + 0.5, 0.0, 1.0);
      double bx = e.x_start + (e.x_end - e.x_start) * frac;
      double by = e.y_start + (e.y_end - e.y_start) * frac;
      if (e.team == Team::Away) {
        bx = pitch::mirror_x(bx);
        by = pitch::mirror_y(by);
      }
      const Team attacking = pp.team;
      const std::size_t holder_slot = static_cast<std::size_t>(std::stoi(e.player_id.substr(1)));
      const std::size_t holder_index = (e.team == Team::Home ? 0 : 11) + holder_slot - 1;

      if (g.possession != offset_possession) {
        offset_possession = g.possession;
        for (auto& o : press_offset) {
          const double r = rng_.uniform(1.5, 4.5), a = rng_.uniform(0.0, 2.0 * 3.141592653589793);
          o = {r * std::cos(a), r * std::sin(a)};
        }
      }
      const std::size_t pressers = pp.high_pressure ? 4 : 1;

      std::array<std::array<double, 2>, 22> target{};
      for (std::size_t side = 0; side < 2; ++side) {
        const Team t = side == 0 ? Team::Home : Team::Away;
        const bool in_possession = t == attacking;
        const double ball_own_x = t == Team::Home ? bx : pitch::mirror_x(bx);
        const double ball_own_y = t == Team::Home ? by : pitch::mirror_y(by);
        for (std::size_t p = 0; p < 11; ++p) {
          double fx = kFormation[p][0], fy = kFormation[p][1];
          if (p > 0) {
            fx += 0.4 * (ball_own_x - 52.5) + (in_possession ? 10.0 : -5.0);
            fy += 0.3 * (ball_own_y - fy);
          }
          if (t == Team::Away) {
            fx = pitch::mirror_x(fx);
            fy = pitch::mirror_y(fy);
          }
          target[side * 11 + p] = {fx, fy};
        }
      }
      // Pressers: the defenders nearest the ball close in on it.
      const std::size_t def_base = attacking == Team::Home ? 11 : 0;
      std::array<std::size_t, 10> order{};
      for (std::size_t k = 0; k < 10; ++k) order[k] = k + 1;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& pa = pos[def_base + a];
        const auto& pb = pos[def_base + b];
        const double da = std::hypot(pa[0] - bx, pa[1] - by), db = std::hypot(pb[0] - bx, pb[1] - by);
        return da != db ? da < db : a < b;
      });
      for (std::size_t k = 0; k < pressers; ++k) {
        const std::size_t idx = def_base + order[k];
        target[idx] = {bx + press_offset[k][0], by + press_offset[k][1]};
      }
      target[holder_index] = {bx, by};

      for (std::size_t i = 0; i < 22; ++i) {
        const double tx = clampd(target[i][0], 0.5, 104.5), ty = clampd(target[i][1], 0.5, 67.5);
        if (s == 0) {
          pos[i] = {tx, ty};
        } else {
          double mx = tx - pos[i][0], my = ty - pos[i][1];
          const double d = std::hypot(mx, my);
          const double step = 9.0;
          if (d > step) {
            mx *= step / d;
            my *= step / d;
          }
          pos[i][0] = clampd(pos[i][0] + mx + rng_.normal(0.0, 0.2), 0.0, pitch::kLength);
          pos[i][1] = clampd(pos[i][1] + my + rng_.normal(0.0, 0.2), 0.0, pitch::kWidth);
        }
      }

      Frame fr;
      fr.match_id = match_;
      fr.time_s = frame_time(half, ts);
      for (std::size_t i = 0; i < 22; ++i) {
        auto& slot = fr.players[i];
        slot.team = i < 11 ? Team::Home : Team::Away;
        slot.player_id = player(slot.team, i % 11 + 1);
        slot.x = round_to(pos[i][0], 0.01);
        slot.y = round_to(pos[i][1], 0.01);
      }
      fr.ball_holder = e.player_id;
      frames.push_back(std::move(fr));
    }
  }

  const SyntheticConfig& cfg_;
  Rng rng_;
  std::string match_;
  double t_ = 0.0;
  std::vector<GeneratedEvent> generated_;
  std::vector<PlantedPossession> planted_;
};

}  // namespace detail

struct SyntheticMatch {
  std::vector<Event> events;
  std::vector<Frame> frames;
  std::vector<PlantedPossession> possessions;
};

/// One match, drawn from its own RNG stream derived from (seed, match_index).
inline SyntheticMatch generate_synthetic_match(const SyntheticConfig& cfg, std::size_t match_index) {
  cfg.validate();
  SyntheticMatch m;
  detail::MatchSimulator(cfg, match_index).run(m.events, m.frames, m.possessions);
  return m;
}

inline SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticCorpus corpus;
  corpus.truth.behavioral_skew = cfg.behavioral_skew;
  corpus.truth.goal_model = cfg.goal_model;
  corpus.truth.keep_prob_out = cfg.keep_prob_out;
  corpus.truth.keep_prob_foul = cfg.keep_prob_foul;
  for (std::size_t m = 0; m < cfg.n_matches; ++m) {
    auto match = generate_synthetic_match(cfg, m);
    std::move(match.events.begin(), match.events.end(), std::back_inserter(corpus.events));
    std::move(match.frames.begin(), match.frames.end(), std::back_inserter(corpus.frames));
    std::move(match.possessions.begin(), match.possessions.end(),
              std::back_inserter(corpus.truth.possessions));
  }
  return corpus;
}

struct PlantedShot {
  std::array<double, 5> features{};  // angle, distance, time_remaining, home_away, body_id
  bool goal = false;
  double probability = 0.0;
};

/// Independent shot sample from the planted goal model, for recovery checks.
inline std::vector<PlantedShot> sample_planted_shots(const PlantedGoalModel& model, std::size_t n,
                                                     std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PlantedShot> shots(n);
  for (auto& s : shots) {
    const double x = rng.uniform(70.0, 104.5);
    const double y = detail::clampd(rng.normal(34.0, 9.0), 1.0, 67.0);
    const double u = rng.uniform();
    const double body = u < 0.15 ? 0.0 : (u < 0.25 ? 1.0 : 2.0);
    s.features = {pitch::angle_to_goal(x, y), pitch::distance_to_goal(x, y),
                  rng.uniform(0.0, pitch::kHalfLengthSeconds), rng.bernoulli(0.5) ? 1.0 : 0.0, body};
    s.probability = model.probability(s.features[0], s.features[1], s.features[2], s.features[3],
                                      s.features[4]);
    s.goal = rng.bernoulli(s.probability);
  }
  return shots;
}

inline nlohmann::json ground_truth_json(const GroundTruth& truth) {
  nlohmann::json j;
  for (const auto& [ctx, d] : truth.behavioral_skew)
    j["behavioral_skew"][ctx] = {{"shot", d[0]}, {"out", d[1]}, {"foul", d[2]}, {"error", d[3]}};
  const auto& g = truth.goal_model;
  j["goal_model"] = {{"bias", g.bias},       {"angle", g.angle},         {"distance", g.distance},
                     {"time_remaining", g.time_remaining}, {"home_away", g.home_away}, {"body", g.body}};
  j["keep_prob_out"] = truth.keep_prob_out;
  j["keep_prob_foul"] = truth.keep_prob_foul;
  auto& list = j["possessions"] = nlohmann::json::array();
  for (const auto& p : truth.possessions)
    list.push_back({p.match_id, p.half, std::string(to_string(p.team)), std::string(to_string(p.ending)),
                    p.context, p.n_actions});
  return j;
}

}  // namespace prl
