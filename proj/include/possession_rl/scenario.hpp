#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "possession_rl/policy.hpp"

namespace prl {

struct ScenarioReport {
  std::size_t episode_id = 0;
  std::size_t step = 0;
  std::size_t possession_number = 0;
  Team team = Team::Home;
  EndingAction performed = EndingAction::Error;
  double performed_reward = 0.0;
  EndingAction recommended = EndingAction::Error;
  std::array<double, kEndingCount> target{};
  std::array<double, kEndingCount> behavioral{};
  double expected_reward = 0.0;  // of the recommended action
  double delta = 0.0;
};

/// Most probable action; ties go to the earlier of Shot, Out, Foul, Error.
inline EndingAction recommend(const std::array<double, kEndingCount>& p) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < kEndingCount; ++a)
    if (p[a] > p[best]) best = a;
  return static_cast<EndingAction>(best);
}

/// A shot earns the possession value and an error the loss reward. Out and foul
/// outcomes depend on who restarts, so they fall back to the fitted Q̂.
inline double expected_reward(EndingAction a, double pv, const std::array<double, kEndingCount>& qhat) {
  switch (a) {
    case EndingAction::Shot: return pv;
    case EndingAction::Error: return kLossReward;
    default: return qhat[index(a)];
  }
}

/// Every ending decision of the table, ranked by |delta| (ties keep table order),
/// truncated to top_k.
inline std::vector<ScenarioReport> scenario_report(const TransitionTable& table,
                                                   const std::vector<std::array<double, kEndingCount>>& target_rows,
                                                   const std::vector<double>& pv_rows,
                                                   const std::vector<std::array<double, kEndingCount>>& qhat_rows,
                                                   std::size_t top_k) {
  const std::size_t n = table.rows.size();
  if (target_rows.size() != n || pv_rows.size() != n || qhat_rows.size() != n)
    throw ValidationError("scenario_report: one distribution, value and Q row per transition required");
  std::vector<ScenarioReport> all(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = table.rows[i];
    auto& s = all[i];
    s.episode_id = row.episode_id;
    s.step = row.step;
    s.possession_number = row.possession_number;
    s.team = row.team;
    s.performed = row.action;
    s.performed_reward = row.reward;
    s.target = target_rows[i];
    s.behavioral = row.q;
    s.recommended = recommend(s.target);
    s.expected_reward = expected_reward(s.recommended, pv_rows[i], qhat_rows[i]);
    s.delta = s.expected_reward - s.performed_reward;
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const ScenarioReport& a, const ScenarioReport& b) { return std::abs(a.delta) > std::abs(b.delta); });
  all.resize(std::min(top_k, all.size()));
  return all;
}

inline std::string serialize_scenarios(const std::vector<ScenarioReport>& rows) {
  std::string out =
      "rank,episode_id,step,possession_number,team,performed,performed_reward,recommended,expected_reward,delta,"
      "p_shot,p_out,p_foul,p_error,q_shot,q_out,q_foul,q_error\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = rows[i];
    out += std::to_string(i + 1) + ',' + std::to_string(s.episode_id) + ',' + std::to_string(s.step) + ',' +
           std::to_string(s.possession_number) + ',' + std::string(to_string(s.team)) + ',' +
           std::string(to_string(s.performed)) + ',' + text::format_double(s.performed_reward) + ',' +
           std::string(to_string(s.recommended)) + ',' + text::format_double(s.expected_reward) + ',' +
           text::format_double(s.delta);
    for (double p : s.target) out += ',' + text::format_double(p);
    for (double q : s.behavioral) out += ',' + text::format_double(q);
    out += '\n';
  }
  return out;
}

}  // namespace prl
