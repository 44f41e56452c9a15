#pragma once

#include <array>
#include <vector>

#include "possession_rl/ope.hpp"
#include "possession_rl/random.hpp"
#include "possession_rl/reward.hpp"

namespace prl::testing {

// Two states, two actions, start in A.
//   A, a0: r = 1,   ends with probability 0.5, else moves to B
//   A, a1: r = 0.2, moves to B with probability 0.8, else ends
//   B, a0: r = 0.5, ends;   B, a1: r = -0.3, ends
struct TwoStateMdp {
  std::array<std::array<double, 2>, 2> behavior = {{{0.5, 0.5}, {0.6, 0.4}}};
  std::array<std::array<double, 2>, 2> target = {{{0.8, 0.2}, {0.3, 0.7}}};
  std::array<std::array<double, 2>, 2> reward = {{{1.0, 0.2}, {0.5, -0.3}}};
  std::array<double, 2> continue_prob = {0.5, 0.8};  // from A to B after each action
  double gamma = 0.99;

  struct Path {
    double prob_target = 0.0;
    std::vector<std::array<int, 2>> steps;  // (state, action)
  };

  std::vector<Path> paths() const {
    std::vector<Path> out;
    for (int a = 0; a < 2; ++a) {
      const double pa = target[0][a];
      out.push_back({pa * (1.0 - continue_prob[a]), {{0, a}}});
      for (int b = 0; b < 2; ++b) out.push_back({pa * continue_prob[a] * target[1][b], {{0, a}, {1, b}}});
    }
    return out;
  }

  std::vector<double> rewards_of(const Path& p) const {
    std::vector<double> r;
    for (const auto& s : p.steps) r.push_back(reward[s[0]][s[1]]);
    return r;
  }

  static double discounted(const std::vector<double>& r, double g) {
    double v = 0.0, w = 1.0;
    for (double x : r) {
      v += w * x;
      w *= g;
    }
    return v;
  }

  // Target value of the normalized return Σγ^t r / Σγ^t.
  double exact_normalized_value() const {
    double v = 0.0;
    for (const auto& p : paths()) v += p.prob_target * episode_return(rewards_of(p), {gamma, false});
    return v;
  }

  // Target value of the discounted sum Σγ^t r.
  double exact_discounted_value() const {
    double v = 0.0;
    for (const auto& p : paths()) v += p.prob_target * discounted(rewards_of(p), gamma);
    return v;
  }

  // Exact action values of the discounted sum under the target policy.
  std::array<std::array<double, 2>, 2> exact_q() const {
    std::array<std::array<double, 2>, 2> q{};
    q[1] = reward[1];
    const double vb = target[1][0] * q[1][0] + target[1][1] * q[1][1];
    for (int a = 0; a < 2; ++a) q[0][a] = reward[0][a] + gamma * continue_prob[a] * vb;
    return q;
  }

  enum class Returns { Normalized, Discounted };

  // Episodes drawn from the behaviour policy; qhat filled exactly or left at zero.
  std::vector<OpeEpisode> sample(std::size_t n, Rng& rng, bool exact_qhat, Returns ret = Returns::Normalized) const {
    const auto q = exact_q();
    std::vector<OpeEpisode> eps(n);
    for (std::size_t i = 0; i < n; ++i) {
      eps[i].id = i;
      int s = 0;
      std::vector<double> r;
      while (true) {
        const std::size_t a = rng.bernoulli(behavior[s][0]) ? 0 : 1;
        OpeStep st;
        st.action = a;
        st.q_taken = behavior[s][a];
        st.reward = reward[s][a];
        st.p = {target[s][0], target[s][1], 0.0, 0.0};
        if (exact_qhat) st.qhat = {q[s][0], q[s][1], 0.0, 0.0};
        eps[i].steps.push_back(st);
        r.push_back(st.reward);
        if (s == 1 || !rng.bernoulli(continue_prob[a])) break;
        s = 1;
      }
      eps[i].ret = ret == Returns::Normalized ? episode_return(r, {gamma, false}) : discounted(r, gamma);
    }
    return eps;
  }
};

}  // namespace prl::testing
