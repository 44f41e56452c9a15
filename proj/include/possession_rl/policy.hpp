#pragma once

#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "possession_rl/ope.hpp"
#include "possession_rl/outcome_classifier.hpp"
#include "possession_rl/reward.hpp"
#include "possession_rl/text.hpp"

namespace prl {

struct RewardedTransition {
  std::size_t episode_id = 0;
  std::size_t step = 0;
  std::size_t state_index = 0;  // row of the stacked state tensor
  EndingAction action = EndingAction::Error;
  std::array<double, kEndingCount> q{};
  double reward = 0.0;
  bool next_same_team = false;
  std::size_t possession_number = 0;
  Team team = Team::Home;
};

struct EpisodeBlock {
  std::size_t begin = 0, end = 0;
  std::size_t size() const { return end - begin; }
};

struct TransitionTable {
  std::vector<RewardedTransition> rows;
  std::vector<EpisodeBlock> episodes;
  std::size_t dropped = 0;

  std::span<const RewardedTransition> episode(std::size_t e) const {
    return {rows.data() + episodes[e].begin, episodes[e].size()};
  }
  std::vector<double> rewards(std::size_t e) const {
    std::vector<double> r;
    for (const auto& t : episode(e)) r.push_back(t.reward);
    return r;
  }
};

/// One episode's possessions in time order, before rewards are attached.
struct EpisodeInput {
  std::size_t episode_id = 0;
  Team team = Team::Home;
  std::vector<std::size_t> state_index;
  std::vector<EndingAction> actions;
  std::vector<double> pv;
  std::vector<std::size_t> possession_number;
};

inline void rebuild_blocks(TransitionTable& t) {
  t.episodes.clear();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (i == 0 || t.rows[i].episode_id != t.rows[i - 1].episode_id) t.episodes.push_back({i, i});
    t.episodes.back().end = i + 1;
  }
}

/// q_all holds the behavioural distribution for every row of the state tensor.
inline TransitionTable build_transition_table(const std::vector<EpisodeInput>& episodes,
                                              const std::vector<std::array<double, kEndingCount>>& q_all) {
  TransitionTable table;
  for (const auto& ep : episodes) {
    const std::size_t n = ep.actions.size();
    if (ep.pv.size() != n || ep.state_index.size() != n || ep.possession_number.size() != n)
      throw ValidationError("build_transition_table: ragged episode input");
    for (std::size_t t = 0; t < n; ++t) {
      const bool last = t + 1 == n;
      const double pv = ep.pv[t];
      double reward = std::numeric_limits<double>::quiet_NaN();
      if (std::isfinite(pv) && (last || ep.actions[t] == EndingAction::Shot || std::isfinite(ep.pv[t + 1])))
        reward = action_reward(pv, last ? std::nullopt : std::optional<double>(ep.pv[t + 1]), ep.actions[t], !last);
      if (!std::isfinite(reward)) {
        ++table.dropped;
        continue;
      }
      RewardedTransition row;
      row.episode_id = ep.episode_id;
      row.step = t;
      row.state_index = ep.state_index[t];
      row.action = ep.actions[t];
      row.q = q_all.at(ep.state_index[t]);
      row.reward = reward;
      row.next_same_team = !last;
      row.possession_number = ep.possession_number[t];
      row.team = ep.team;
      table.rows.push_back(row);
    }
  }
  rebuild_blocks(table);
  return table;
}

inline constexpr std::string_view kTransitionHeader =
    "action,q_shot,q_out,q_foul,q_error,episode,reward,possession_number,team,state_index";

inline std::string serialize_transitions(const TransitionTable& t) {
  std::string out(kTransitionHeader);
  out += '\n';
  for (const auto& r : t.rows) {
    out += std::string(to_string(r.action));
    for (double q : r.q) out += "," + text::format_double(q);
    out += "," + std::to_string(r.episode_id) + "," + text::format_double(r.reward) + "," +
           std::to_string(r.possession_number) + "," + std::string(to_string(r.team)) + "," +
           std::to_string(r.state_index) + "\n";
  }
  return out;
}

inline TransitionTable parse_transitions(std::string_view content) {
  const auto rows = text::lines(content);
  if (rows.empty() || text::trim(rows[0]) != kTransitionHeader) throw ParseError("bad transition header", 1);
  TransitionTable t;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (text::trim(rows[i]).empty()) continue;
    const auto f = text::split(rows[i], ',');
    if (f.size() != 10) throw ParseError("expected 10 fields", i + 1);
    RewardedTransition r;
    const auto a = ending_from_string(f[0]);
    const auto team = team_from_string(f[8]);
    if (!a || !team) throw ParseError("bad action or team", i + 1);
    r.action = *a;
    r.team = *team;
    for (std::size_t c = 0; c < kEndingCount; ++c) {
      const auto v = text::parse_double(f[1 + c]);
      if (!v) throw ParseError("bad probability", i + 1);
      r.q[c] = *v;
    }
    const auto ep = text::parse_int(f[5]);
    const auto rew = text::parse_double(f[6]);
    const auto pn = text::parse_int(f[7]);
    const auto si = text::parse_int(f[9]);
    if (!ep || !rew || !pn || !si || *ep < 0 || *pn < 0 || *si < 0) throw ParseError("bad numeric field", i + 1);
    r.episode_id = static_cast<std::size_t>(*ep);
    r.reward = *rew;
    r.possession_number = static_cast<std::size_t>(*pn);
    r.state_index = static_cast<std::size_t>(*si);
    t.rows.push_back(r);
  }
  rebuild_blocks(t);
  for (const auto& b : t.episodes)
    for (std::size_t i = b.begin; i < b.end; ++i) {
      t.rows[i].step = i - b.begin;
      t.rows[i].next_same_team = i + 1 < b.end;
    }
  return t;
}

struct PGConfig {
  double learning_rate = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_episodes = 16;
  double w_min = 0.1;
  double w_max = 10.0;
  bool clip = true;
  double gamma = 0.99;
  bool standardize = true;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("policy learning rate must be positive");
    if (!(w_min > 0.0 && w_min <= 1.0 && w_max >= 1.0)) throw ValidationError("clip bounds must satisfy 0 < w_min <= 1 <= w_max");
    if (batch_episodes == 0) throw ValidationError("batch size must be positive");
    ReturnConfig{gamma, standardize}.validate();
  }
  OpeConfig ope() const { return {w_min, w_max, clip, gamma}; }
};

struct PgSample {
  std::size_t state_index = 0;
  std::size_t action = 0;
  double q_taken = 0.0;
  double multiplier = 0.0;  // R(τ) of the sample's episode
};

/// Objective mean(w · R) with w = p/q (clipped when configured) and its gradient
/// mean(w · R · ∇ log p), the weight held fixed. Without clipping the gradient is
/// exactly that of mean((p/q) · R).
inline double pg_gradient(const SequenceNet& net, const StateTensor& states, std::span<const PgSample> batch,
                          bool clip, double w_min, double w_max, ParamVector& grad) {
  grad.assign(net.parameter_count(), 0.0);
  if (batch.empty()) return 0.0;
  std::vector<std::size_t> idx(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!(batch[i].q_taken > 0.0)) throw ValidationError("pg_update: zero behavioural propensity for a taken action");
    idx[i] = batch[i].state_index;
  }
  const auto b = net.make_batch(states, idx);
  NetCache cache;
  const Eigen::MatrixXd p = SequenceNet::softmax(net.forward(b, &cache));
  Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(p.rows(), p.cols());
  const double n = static_cast<double>(batch.size());
  double objective = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    const auto a = static_cast<Eigen::Index>(batch[i].action);
    double w = p(a, j) / batch[i].q_taken;
    if (clip) w = std::clamp(w, w_min, w_max);
    objective += w * batch[i].multiplier / n;
    const double scale = w * batch[i].multiplier / n;
    dlogits.col(j) = -scale * p.col(j);
    dlogits(a, j) += scale;
  }
  net.backward(b, cache, dlogits, grad);
  return objective;
}

/// One ascent step θ ← θ + α ĝ. Returns the batch objective.
inline double pg_update(SequenceNet& net, const StateTensor& states, std::span<const PgSample> batch,
                        const PGConfig& cfg) {
  ParamVector grad;
  const double obj = pg_gradient(net, states, batch, cfg.clip, cfg.w_min, cfg.w_max, grad);
  auto& th = net.params();
  for (std::size_t i = 0; i < th.size(); ++i) th[i] += cfg.learning_rate * grad[i];
  return obj;
}

struct EpisodeReturns {
  std::vector<double> raw;           // used by OPE
  std::vector<double> standardized;  // PG multiplier when standardization is on
  RewardStats stats;
};

inline EpisodeReturns episode_returns(const TransitionTable& t, double gamma) {
  EpisodeReturns r;
  std::vector<double> all;
  for (const auto& row : t.rows) all.push_back(row.reward);
  r.stats = fit_reward_stats(all);
  for (std::size_t e = 0; e < t.episodes.size(); ++e) {
    const auto rw = t.rewards(e);
    r.raw.push_back(episode_return(rw, {gamma, false}));
    r.standardized.push_back(episode_return(rw, {gamma, true}, &r.stats));
  }
  return r;
}

/// OPE inputs for a target policy given its distribution at every table row.
inline std::vector<OpeEpisode> ope_episodes(const TransitionTable& t,
                                            const std::vector<std::array<double, kEndingCount>>& p_rows,
                                            const std::vector<std::array<double, kEndingCount>>& qhat_rows,
                                            const std::vector<double>& returns) {
  std::vector<OpeEpisode> out(t.episodes.size());
  for (std::size_t e = 0; e < t.episodes.size(); ++e) {
    out[e].id = t.rows[t.episodes[e].begin].episode_id;
    out[e].ret = returns[e];
    for (std::size_t i = t.episodes[e].begin; i < t.episodes[e].end; ++i) {
      const auto& row = t.rows[i];
      OpeStep s;
      s.action = index(row.action);
      s.q_taken = row.q[s.action];
      s.reward = row.reward;
      s.p = p_rows[i];
      s.qhat = qhat_rows[i];
      out[e].steps.push_back(s);
    }
  }
  return out;
}

/// Target distribution at every table row.
inline std::vector<std::array<double, kEndingCount>> policy_rows(const SequenceNet& net, const StateTensor& states,
                                                                 const TransitionTable& t, std::size_t chunk = 256) {
  std::vector<std::array<double, kEndingCount>> out(t.rows.size());
  std::vector<std::size_t> idx(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) idx[i] = t.rows[i].state_index;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const std::span<const std::size_t> part(idx.data() + start, std::min(chunk, idx.size() - start));
    const auto p = net.probabilities(net.make_batch(states, part));
    for (std::size_t j = 0; j < part.size(); ++j)
      for (std::size_t c = 0; c < kEndingCount; ++c)
        out[start + j][c] = p(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j));
  }
  return out;
}

/// Q̂ fitted on discounted reward-to-go and evaluated at every table row.
inline std::vector<std::array<double, kEndingCount>> qhat_rows(const TransitionTable& t, const StateTensor& states,
                                                               double gamma, QHatModel* model_out = nullptr) {
  std::vector<std::vector<double>> x;
  std::vector<std::size_t> a;
  std::vector<double> y;
  for (std::size_t e = 0; e < t.episodes.size(); ++e) {
    const auto g = reward_to_go(t.rewards(e), gamma);
    for (std::size_t i = t.episodes[e].begin; i < t.episodes[e].end; ++i) {
      x.push_back(qhat_features(states, t.rows[i].state_index));
      a.push_back(index(t.rows[i].action));
      y.push_back(g[i - t.episodes[e].begin]);
    }
  }
  const auto m = fit_qhat(x, a, y);
  std::vector<std::array<double, kEndingCount>> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = m.predict(x[i]);
  if (model_out) *model_out = m;
  return out;
}

struct TraceRow {
  std::size_t epoch = 0;
  double mean_reward_is = 0.0;
  double mean_reward_dr = 0.0;
};

struct PolicyResult {
  SequenceNet net;
  std::vector<TraceRow> trace;
  bool aborted = false;
  std::string diagnostic;
};

inline std::string serialize_trace(const std::vector<TraceRow>& trace) {
  std::string out = "epoch,mean_reward_is,mean_reward_dr\n";
  for (const auto& r : trace)
    out += std::to_string(r.epoch) + "," + text::format_double(r.mean_reward_is) + "," +
           text::format_double(r.mean_reward_dr) + "\n";
  return out;
}

/// Batch off-policy policy gradient starting from the behavioural network.
/// Epoch 0 of the trace is the starting point.
inline PolicyResult train_policy(const TransitionTable& table, const StateTensor& states,
                                 const SequenceNet& behavioral, const PGConfig& cfg) {
  cfg.validate();
  if (table.rows.empty()) throw ValidationError("train_policy: empty transition table");
  PolicyResult res{behavioral, {}, false, {}};
  const auto returns = episode_returns(table, cfg.gamma);
  const auto& mult = cfg.standardize ? returns.standardized : returns.raw;
  const auto qhat = qhat_rows(table, states, cfg.gamma);

  auto evaluate = [&](std::size_t epoch) {
    const auto eps = ope_episodes(table, policy_rows(res.net, states, table), qhat, returns.raw);
    res.trace.push_back({epoch, is_value(eps, cfg.ope()).mean, dr_value(eps, cfg.ope()).mean});
  };
  evaluate(0);

  std::vector<std::size_t> order(table.episodes.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, epoch));
    rng.shuffle(order);
    const SequenceNet last_good = res.net;
    bool bad = false;
    for (std::size_t start = 0; start < order.size() && !bad; start += cfg.batch_episodes) {
      std::vector<PgSample> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_episodes); ++k) {
        const std::size_t e = order[k];
        for (const auto& row : table.episode(e))
          batch.push_back({row.state_index, index(row.action), row.q[index(row.action)], mult[e]});
      }
      const double obj = pg_update(res.net, states, batch, cfg);
      if (!std::isfinite(obj)) bad = true;
    }
    if (!bad) {
      for (double v : res.net.params())
        if (!std::isfinite(v)) {
          bad = true;
          break;
        }
    }
    if (bad) {
      res.net = last_good;
      res.aborted = true;
      res.diagnostic = "non-finite policy objective in epoch " + std::to_string(epoch) +
                       "; kept the parameters from the end of epoch " + std::to_string(epoch - 1);
      break;
    }
    evaluate(epoch);
  }
  return res;
}

}  // namespace prl
