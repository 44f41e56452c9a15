#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace prl {

struct KMeansResult {
  Eigen::MatrixXd centroids;        // k × d
  std::vector<std::size_t> labels;  // one per point
  double inertia = 0.0;             // sum of squared distances to assigned centroid
  std::size_t iterations = 0;
  bool converged = false;
};

struct KMeansOptions {
  std::size_t max_iter = 100;
  double tol = 1e-6;  // max centroid displacement
};

inline constexpr double kDistanceTieTolerance = 1e-12;

/// Distances within a small tolerance count as ties and go to the lower index,
/// so rounding noise in the inputs cannot flip an assignment.
inline std::size_t nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& p,
                                    double* dist2 = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - p).squaredNorm();
    if (c == 0 || d < best_d - kDistanceTieTolerance * (1.0 + best_d)) {
      best_d = d;
      best = static_cast<std::size_t>(c);
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

/// Lloyd iterations from the given initial centroids. Ties go to the lower
/// centroid index; an empty cluster keeps its previous centroid.
inline KMeansResult lloyd(const Eigen::MatrixXd& points, Eigen::MatrixXd centroids,
                          const KMeansOptions& opt = {}) {
  const auto n = static_cast<std::size_t>(points.rows());
  const auto k = static_cast<std::size_t>(centroids.rows());
  KMeansResult r;
  r.labels.assign(n, 0);
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) r.labels[i] = nearest_centroid(centroids, points.row(i));
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(centroids.rows(), centroids.cols());
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      next.row(r.labels[i]) += points.row(i);
      ++count[r.labels[i]];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) {
        next.row(c) = centroids.row(c);
      } else {
        next.row(c) /= static_cast<double>(count[c]);
      }
      shift = std::max(shift, (next.row(c) - centroids.row(c)).norm());
    }
    centroids = std::move(next);
    r.iterations = it + 1;
    if (shift < opt.tol) {
      r.converged = true;
      break;
    }
  }
  r.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    r.labels[i] = nearest_centroid(centroids, points.row(i), &d);
    r.inertia += d;
  }
  r.centroids = std::move(centroids);
  return r;
}

/// Index of the point farthest from every current centroid (lowest index on ties).
inline std::size_t farthest_point(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids) {
  std::size_t best = 0;
  double best_d = -1.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double d = 0.0;
    nearest_centroid(centroids, points.row(i), &d);
    if (d > best_d) {
      best_d = d;
      best = static_cast<std::size_t>(i);
    }
  }
  return best;
}

/// Seeds starting at point `first`, each further seed the farthest point from the previous ones.
inline Eigen::MatrixXd farthest_first_seeds(const Eigen::MatrixXd& points, std::size_t first,
                                            std::size_t k) {
  Eigen::MatrixXd seeds(static_cast<Eigen::Index>(k), points.cols());
  seeds.row(0) = points.row(static_cast<Eigen::Index>(first));
  for (std::size_t c = 1; c < k; ++c) {
    const auto far = farthest_point(points, seeds.topRows(static_cast<Eigen::Index>(c)));
    seeds.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(far));
  }
  return seeds;
}

}  // namespace prl
