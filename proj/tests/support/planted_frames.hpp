#pragma once

#include <cmath>
#include <vector>

#include "possession_rl/match_data.hpp"
#include "possession_rl/random.hpp"

namespace prl::testing {

struct PlantedFrame {
  PlayerState holder;
  std::vector<PlayerState> opponents;  // group members in order: near, middle, far
  std::vector<int> group;
};

// Three opponent groups that are separated in every coordinate of (x, y, vx, vy):
// a tight group around the holder, one at a middle distance and one far away.
// Each group moves with its own shared velocity plus small noise.
inline PlantedFrame planted_three_groups(Rng& rng, std::array<int, 3> sizes = {4, 4, 3}) {
  constexpr double kPi = 3.141592653589793;
  PlantedFrame f;
  const double sx = rng.bernoulli(0.5) ? 1.0 : -1.0, sy = rng.bernoulli(0.5) ? 1.0 : -1.0;
  f.holder = {52.5 - sx * rng.uniform(12, 16), 34.0 - sy * rng.uniform(8, 12), rng.uniform(-2, 2),
              rng.uniform(-2, 2)};
  std::array<std::array<double, 2>, 3> centers = {{
      {f.holder.x, f.holder.y},
      {f.holder.x + sx * rng.uniform(15, 20), f.holder.y + sy * rng.uniform(10, 14)},
      {f.holder.x + sx * rng.uniform(32, 38), f.holder.y + sy * rng.uniform(21, 26)},
  }};
  const double ux = rng.bernoulli(0.5) ? 1.0 : -1.0, uy = rng.bernoulli(0.5) ? 1.0 : -1.0;
  std::array<std::array<double, 2>, 3> vel = {{
      {f.holder.vx, f.holder.vy},
      {f.holder.vx + ux * rng.uniform(2.5, 4), f.holder.vy + uy * rng.uniform(2.5, 4)},
      {f.holder.vx - ux * rng.uniform(2.5, 4), f.holder.vy - uy * rng.uniform(2.5, 4)},
  }};
  for (int g = 0; g < 3; ++g) {
    for (int m = 0; m < sizes[g]; ++m) {
      PlayerState s;
      if (g == 0) {
        const double r = rng.uniform(0.8, 2.5), a = rng.uniform(0, 2 * kPi);
        s.x = centers[0][0] + r * std::cos(a);
        s.y = centers[0][1] + r * std::sin(a);
      } else {
        s.x = centers[g][0] + rng.normal(0, 1.0);
        s.y = centers[g][1] + rng.normal(0, 1.0);
      }
      s.vx = vel[g][0] + rng.normal(0, 0.2);
      s.vy = vel[g][1] + rng.normal(0, 0.2);
      f.opponents.push_back(s);
      f.group.push_back(g);
    }
  }
  return f;
}

inline PlayerState random_state(Rng& rng) {
  return {rng.uniform(0, 105), rng.uniform(0, 68), rng.uniform(-8, 8), rng.uniform(-8, 8)};
}

// Component count by depth-first traversal of a 0/1 adjacency matrix.
template <class Matrix>
int traversal_components(const Matrix& adj) {
  const int n = static_cast<int>(adj.rows());
  std::vector<int> seen(n, 0);
  int comps = 0;
  for (int s = 0; s < n; ++s) {
    if (seen[s]) continue;
    ++comps;
    std::vector<int> stack = {s};
    seen[s] = 1;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int v = 0; v < n; ++v)
        if (adj(u, v) != 0 && !seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
    }
  }
  return comps;
}

}  // namespace prl::testing
