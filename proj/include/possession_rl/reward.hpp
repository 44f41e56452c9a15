#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "possession_rl/vocabulary.hpp"

namespace prl {

inline constexpr double kLossReward = -0.1;

struct ReturnConfig {
  double gamma = 0.99;
  bool standardize = true;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in (0, 1]");
  }
};

/// P(goal, shot | X) = P(shot | X) · P(goal | shot, X).
inline double possession_value(double p_shot, double p_goal_given_shot) {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(p_shot) || !in_unit(p_goal_given_shot)) throw ValidationError("possession_value: probability out of [0, 1]");
  return p_shot * p_goal_given_shot;
}

inline double action_reward(double pv_current, std::optional<double> pv_next, EndingAction action,
                            bool next_same_team) {
  if (action == EndingAction::Shot) return pv_current;
  if (next_same_team) {
    if (!pv_next) throw ValidationError("action_reward: possession kept but next value missing");
    return *pv_next - pv_current;
  }
  return kLossReward;
}

/// Rewards for one episode. Every possession except the last hands over to the
/// same team; the last one ends with a shot or a loss.
inline std::vector<double> episode_rewards(std::span<const double> pv, std::span<const EndingAction> actions) {
  if (pv.size() != actions.size()) throw ValidationError("episode_rewards: size mismatch");
  std::vector<double> r(pv.size());
  for (std::size_t t = 0; t < pv.size(); ++t) {
    const bool last = t + 1 == pv.size();
    r[t] = action_reward(pv[t], last ? std::nullopt : std::optional<double>(pv[t + 1]), actions[t], !last);
  }
  return r;
}

struct RewardStats {
  double mean = 0.0;
  double sd = 1.0;

  double apply(double r) const { return sd > 0.0 ? (r - mean) / sd : 0.0; }
};

/// Corpus-wide mean and population standard deviation.
inline RewardStats fit_reward_stats(std::span<const double> rewards) {
  RewardStats s;
  if (rewards.empty()) return s;
  double sum = 0.0;
  for (double r : rewards) sum += r;
  s.mean = sum / static_cast<double>(rewards.size());
  double sq = 0.0;
  for (double r : rewards) sq += (r - s.mean) * (r - s.mean);
  s.sd = std::sqrt(sq / static_cast<double>(rewards.size()));
  return s;
}

/// R = Σ γ^t r_t / Σ γ^t over the episode horizon.
inline double episode_return(std::span<const double> rewards, const ReturnConfig& cfg,
                             const RewardStats* stats = nullptr) {
  cfg.validate();
  if (rewards.empty()) throw ValidationError("episode_return: empty reward sequence");
  double num = 0.0, den = 0.0, w = 1.0;
  for (double r : rewards) {
    const double v = cfg.standardize && stats ? stats->apply(r) : r;
    num += w * v;
    den += w;
    w *= cfg.gamma;
  }
  return num / den;
}

/// Σ_{k≥t} γ^{k−t} r_k for every step.
inline std::vector<double> reward_to_go(std::span<const double> rewards, double gamma) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    g[t] = acc;
  }
  return g;
}

}  // namespace prl
