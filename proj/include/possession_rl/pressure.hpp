#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "possession_rl/kmeans.hpp"
#include "possession_rl/match_data.hpp"

namespace prl {

inline constexpr std::size_t kKnnNeighbors = 5;
inline constexpr std::size_t kPressureClusters = 3;
inline constexpr double kZeroEigenvalue = 1e-5;

struct KnnGraph {
  Eigen::MatrixXd nodes;      // n × 4 standardized (x, y, vx, vy)
  Eigen::MatrixXd directed;   // directed k-NN edges, row i -> column j
  Eigen::MatrixXd adjacency;  // mutual edges: symmetric 0/1, zero diagonal
  std::size_t k = kKnnNeighbors;
};

struct SpectralEmbedding {
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;  // columns match eigenvalues
  std::size_t zero_count = 0;    // eigenvalues with |lambda| < 1e-5
  bool fallback = false;         // true when fewer than 3 zero eigenvalues
  Eigen::MatrixXd embedding;     // rows = nodes, columns used for clustering
};

struct PressureVector {
  int z1 = 0, z2 = 0, z3 = 0;
  friend bool operator==(const PressureVector&, const PressureVector&) = default;
  int total() const { return z1 + z2 + z3; }
};

inline Eigen::MatrixXd state_matrix(std::span<const PlayerState> players) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(players.size()), 4);
  for (std::size_t i = 0; i < players.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) << players[i].x, players[i].y, players[i].vx, players[i].vy;
  return m;
}

/// Column-wise zero mean / unit population variance; constant columns are only centred.
inline Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double mean = m.col(c).mean();
    out.col(c).array() -= mean;
    const double sd = std::sqrt(out.col(c).squaredNorm() / static_cast<double>(m.rows()));
    if (sd > 1e-12) out.col(c) /= sd;
  }
  return out;
}

/// Directed k-NN over the standardized states, counting each node as its own
/// nearest neighbour; distance ties go to the lower index. The undirected graph
/// keeps mutual edges only. With the OR rule a group of three players cannot
/// form a cluster: each member must link to two players outside it.
inline KnnGraph build_knn_graph(std::span<const PlayerState> opponents, std::size_t k = kKnnNeighbors) {
  KnnGraph g;
  g.k = k;
  g.nodes = standardize_columns(state_matrix(opponents));
  const auto n = static_cast<std::size_t>(g.nodes.rows());
  g.directed = Eigen::MatrixXd::Zero(g.nodes.rows(), g.nodes.rows());
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> d(n);
    for (std::size_t j = 0; j < n; ++j)
      d[j] = (g.nodes.row(static_cast<Eigen::Index>(i)) - g.nodes.row(static_cast<Eigen::Index>(j))).squaredNorm();
    std::iota(order.begin(), order.end(), 0);
    // Self first, then the others by distance.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if ((a == i) != (b == i)) return a == i;
      return d[a] < d[b];
    });
    for (std::size_t r = 1; r < std::min(k, n); ++r) {
      g.directed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(order[r])) = 1.0;
    }
  }
  g.adjacency = g.directed.cwiseProduct(g.directed.transpose());
  return g;
}

inline Eigen::MatrixXd graph_laplacian(const KnnGraph& g) {
  Eigen::MatrixXd L = -g.adjacency;
  L.diagonal() = g.adjacency.rowwise().sum();
  return L;
}

inline SpectralEmbedding laplacian_spectrum(const KnnGraph& g, std::size_t clusters = kPressureClusters) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(graph_laplacian(g));
  SpectralEmbedding s;
  s.eigenvalues = solver.eigenvalues();
  s.eigenvectors = solver.eigenvectors();
  for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i)
    if (std::abs(s.eigenvalues(i)) < kZeroEigenvalue) ++s.zero_count;
  auto cols = static_cast<Eigen::Index>(std::min<std::size_t>(
      s.zero_count >= clusters ? s.zero_count : clusters, static_cast<std::size_t>(s.eigenvalues.size())));
  s.fallback = s.zero_count < clusters;
  // A repeated eigenvalue at the cut has no preferred basis, so take its whole eigenspace.
  if (s.fallback)
    while (cols < s.eigenvalues.size() && s.eigenvalues(cols) - s.eigenvalues(cols - 1) < 1e-9) ++cols;
  s.embedding = s.eigenvectors.leftCols(cols);
  return s;
}

struct PressureDetail {
  PressureVector counts;
  std::vector<int> cluster_of;  // 0-based ordered cluster per opponent
  SpectralEmbedding spectrum;
};

/// Splits the opponents into three spectral clusters and counts each, cluster 1
/// being the one whose members are on average physically closest to the holder.
inline PressureDetail pressure_detail(std::span<const PlayerState> opponents, const PlayerState& holder) {
  if (opponents.size() < kPressureClusters)
    throw ValidationError("pressure needs at least 3 opponents");
  PressureDetail out;
  const KnnGraph g = build_knn_graph(opponents);
  out.spectrum = laplacian_spectrum(g);
  const Eigen::MatrixXd& emb = out.spectrum.embedding;

  const std::size_t n = opponents.size();
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = std::hypot(opponents[i].x - holder.x, opponents[i].y - holder.y);
  // Order-free ranking for ties: physical distance to the holder, then the raw state.
  auto before = [&](std::size_t a, std::size_t b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    const auto& p = opponents[a];
    const auto& q = opponents[b];
    return std::tie(p.x, p.y, p.vx, p.vy) < std::tie(q.x, q.y, q.vx, q.vy);
  };
  std::size_t nearest = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (before(i, nearest)) nearest = i;

  // Holder-anchored farthest-first seeding in the embedding.
  Eigen::MatrixXd seeds(static_cast<Eigen::Index>(kPressureClusters), emb.cols());
  seeds.row(0) = emb.row(static_cast<Eigen::Index>(nearest));
  for (Eigen::Index c = 1; c < seeds.rows(); ++c) {
    std::size_t pick = 0;
    double pick_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0;
      nearest_centroid(seeds.topRows(c), emb.row(static_cast<Eigen::Index>(i)), &d);
      const double tol = kDistanceTieTolerance * (1.0 + pick_d);
      if (d > pick_d + tol || (std::abs(d - pick_d) <= tol && before(i, pick))) {
        pick = i;
        pick_d = std::max(d, pick_d);
      }
    }
    seeds.row(c) = emb.row(static_cast<Eigen::Index>(pick));
  }
  const auto km = lloyd(emb, seeds);

  std::array<double, kPressureClusters> sum{};
  std::array<int, kPressureClusters> count{};
  for (std::size_t i = 0; i < opponents.size(); ++i) {
    sum[km.labels[i]] += dist[i];
    ++count[km.labels[i]];
  }
  std::array<std::size_t, kPressureClusters> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if ((count[a] == 0) != (count[b] == 0)) return count[b] == 0;
    if (count[a] == 0) return false;
    return sum[a] / count[a] < sum[b] / count[b];
  });
  std::array<int, kPressureClusters> rank{};
  for (std::size_t r = 0; r < kPressureClusters; ++r) rank[order[r]] = static_cast<int>(r);
  out.cluster_of.resize(opponents.size());
  for (std::size_t i = 0; i < opponents.size(); ++i) out.cluster_of[i] = rank[km.labels[i]];
  out.counts = {count[order[0]], count[order[1]], count[order[2]]};
  return out;
}

inline PressureVector pressure_counts(std::span<const PlayerState> opponents, const PlayerState& holder) {
  return pressure_detail(opponents, holder).counts;
}

/// Pressure on the frame's ball holder from the 11 players of the other team.
inline PressureVector pressure_counts(const Frame& frame, const FrameStates& states) {
  if (!frame.ball_holder) throw ValidationError("frame at t=" + text::format_double(frame.time_s) + " has no ball holder");
  std::optional<std::size_t> h;
  for (std::size_t i = 0; i < kPlayersPerFrame; ++i)
    if (frame.players[i].player_id == *frame.ball_holder) h = i;
  if (!h) throw ValidationError("ball holder " + *frame.ball_holder + " not in frame");
  const Team own = frame.players[*h].team;
  std::vector<PlayerState> opp;
  for (std::size_t i = 0; i < kPlayersPerFrame; ++i)
    if (frame.players[i].team != own) opp.push_back(states[i]);
  if (opp.size() != kPlayersPerTeam)
    throw ValidationError("frame at t=" + text::format_double(frame.time_s) + " lacks 11 opponents");
  return pressure_counts(opp, states[*h]);
}

struct FramePressure {
  std::string match_id;
  double time_s = 0.0;
  PressureVector z;
};

inline std::vector<FramePressure> compute_frame_pressures(const std::vector<Frame>& frames) {
  const auto states = compute_velocities(frames);
  std::vector<FramePressure> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (!frames[i].ball_holder) continue;
    out.push_back({frames[i].match_id, frames[i].time_s, pressure_counts(frames[i], states[i])});
  }
  return out;
}

inline constexpr std::string_view kPressureHeader = "match_id,time_s,z1,z2,z3";

inline std::string serialize_pressures(const std::vector<FramePressure>& rows) {
  std::string out(kPressureHeader);
  out += '\n';
  for (const auto& r : rows)
    out += r.match_id + ',' + text::format_double(r.time_s) + ',' + std::to_string(r.z.z1) + ',' +
           std::to_string(r.z.z2) + ',' + std::to_string(r.z.z3) + '\n';
  return out;
}

inline std::vector<FramePressure> parse_pressures(std::string_view content) {
  std::vector<FramePressure> out;
  const auto rows = text::lines(content);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto row = text::trim(rows[i]);
    if (row.empty() || (i == 0 && row.starts_with("match_id"))) continue;
    const auto f = text::split(row, ',');
    if (f.size() != 5) throw ParseError("expected 5 fields", i + 1);
    auto t = text::parse_double(f[1]);
    auto a = text::parse_int(f[2]), b = text::parse_int(f[3]), c = text::parse_int(f[4]);
    if (!t || !a || !b || !c) throw ParseError("bad pressure row", i + 1);
    out.push_back({std::string(f[0]), *t,
                   {static_cast<int>(*a), static_cast<int>(*b), static_cast<int>(*c)}});
  }
  return out;
}

struct ElbowResult {
  std::array<double, 6> distortion{};  // mean squared distance per point, k = 1..6
  std::array<double, 6> inertia{};     // sum of squared distances, k = 1..6
  std::size_t elbow = 1;
  double strength = 0.0;  // largest second difference of log distortion
  bool low_confidence = false;
};

inline constexpr double kElbowMinStrength = 0.5;

/// k-means objective curves for k = 1..6 on raw opponent states, averaged over
/// frames. Each k starts from the k-1 solution plus the farthest point, so the
/// curves never increase with k.
inline ElbowResult select_cluster_count(const std::vector<std::vector<PlayerState>>& frames) {
  ElbowResult r;
  if (frames.empty()) throw ValidationError("elbow needs at least one frame");
  for (const auto& f : frames) {
    const Eigen::MatrixXd pts = state_matrix(f);
    Eigen::MatrixXd centroids = pts.colwise().mean();
    KMeansResult km = lloyd(pts, centroids);
    for (std::size_t k = 1; k <= 6; ++k) {
      if (k > 1) {
        Eigen::MatrixXd seeds(static_cast<Eigen::Index>(k), pts.cols());
        seeds.topRows(static_cast<Eigen::Index>(k - 1)) = km.centroids;
        seeds.row(static_cast<Eigen::Index>(k - 1)) =
            pts.row(static_cast<Eigen::Index>(farthest_point(pts, km.centroids)));
        km = lloyd(pts, seeds);
      }
      r.inertia[k - 1] += km.inertia;
      r.distortion[k - 1] += km.inertia / static_cast<double>(pts.rows());
    }
  }
  for (std::size_t k = 0; k < 6; ++k) {
    r.inertia[k] /= static_cast<double>(frames.size());
    r.distortion[k] /= static_cast<double>(frames.size());
  }
  std::array<double, 6> logd{};
  for (std::size_t k = 0; k < 6; ++k) logd[k] = std::log(std::max(r.distortion[k], 1e-300));
  r.strength = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 2; k <= 5; ++k) {
    const double d2 = (logd[k - 2] - logd[k - 1]) - (logd[k - 1] - logd[k]);
    if (d2 > r.strength) {
      r.strength = d2;
      r.elbow = k;
    }
  }
  if (r.strength < kElbowMinStrength) {
    r.elbow = 1;
    r.low_confidence = true;
  }
  return r;
}

}  // namespace prl
