#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "possession_rl/random.hpp"
#include "possession_rl/state_builder.hpp"
#include "possession_rl/text.hpp"

namespace prl {

struct ShotRecord {
  std::vector<double> features;
  bool goal = false;
};

inline const std::vector<std::string>& xg_feature_names(bool with_pressure) {
  static const std::vector<std::string> base = {"angle_to_goal", "distance_to_goal", "time_remaining",
                                                "home_away", "body_id"};
  static const std::vector<std::string> pressure = {"angle_to_goal", "distance_to_goal", "time_remaining",
                                                    "home_away",     "body_id",          "z1",
                                                    "z2"};
  return with_pressure ? pressure : base;
}

/// Shot features for the goal model. The action result is left out: for a shot
/// it is the goal label itself. z3 is omitted because z1 + z2 + z3 = 11.
inline std::vector<double> xg_features(const ActionFeatures& f, bool with_pressure) {
  std::vector<double> x = {f.angle_to_goal, f.distance_to_goal, f.time_remaining, f.home_away, f.body_id};
  if (with_pressure) {
    if (!f.pressure) throw ValidationError("xg features: pressure requested but missing");
    x.push_back(f.pressure->z1);
    x.push_back(f.pressure->z2);
  }
  return x;
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct LogisticModel {
  double bias = 0.0;
  std::vector<double> weights;
  std::vector<std::string> feature_names;

  double score(const std::vector<double>& x) const {
    if (x.size() != weights.size()) throw ValidationError("xg: feature count mismatch");
    double z = bias;
    for (std::size_t j = 0; j < x.size(); ++j) z += weights[j] * x[j];
    return z;
  }
};

/// Goal probability, kept strictly inside (0, 1).
inline double predict_goal_prob(const LogisticModel& m, const std::vector<double>& x) {
  constexpr double eps = 1e-15;
  return std::clamp(sigmoid(m.score(x)), eps, 1.0 - eps);
}

struct XgFitOptions {
  double lambda = 1.0;        // L2 penalty on the weights; the bias is not penalized
  double tolerance = 1e-8;    // gradient norm
  std::size_t max_iter = 100;
};

struct XgFitReport {
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
};

/// Maximizes sum log-likelihood - lambda/2 * |w|^2 by Newton's method.
inline LogisticModel fit_xg(const std::vector<ShotRecord>& shots, const XgFitOptions& opt = {},
                            XgFitReport* report = nullptr, std::vector<std::string> names = {}) {
  if (shots.empty()) throw ValidationError("fit_xg: no shots");
  const std::size_t d = shots.front().features.size();
  std::size_t goals = 0;
  for (const auto& s : shots) {
    if (s.features.size() != d) throw ValidationError("fit_xg: ragged feature rows");
    goals += s.goal;
  }
  if (goals == 0 || goals == shots.size()) throw ValidationError("fit_xg: both outcomes are required");

  const auto n = static_cast<Eigen::Index>(shots.size());
  const auto p = static_cast<Eigen::Index>(d + 1);
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (std::size_t j = 0; j < d; ++j) X(i, static_cast<Eigen::Index>(j + 1)) = shots[i].features[j];
    y(i) = shots[i].goal ? 1.0 : 0.0;
  }
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p, opt.lambda);
  penalty(0) = 0.0;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  const double rate = static_cast<double>(goals) / static_cast<double>(shots.size());
  beta(0) = std::log(rate / (1.0 - rate));

  auto objective = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd z = X * b;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double zi = z(i);
      // log(1 + e^z) computed stably
      const double softplus = zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi));
      ll += y(i) * zi - softplus;
    }
    return ll - 0.5 * (penalty.array() * b.array().square()).sum();
  };

  XgFitReport rep;
  double obj = objective(beta);
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    const Eigen::VectorXd z = X * beta;
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = sigmoid(z(i));
      w(i) = mu(i) * (1.0 - mu(i));
    }
    const Eigen::VectorXd grad = X.transpose() * (y - mu) - penalty.cwiseProduct(beta);
    rep.gradient_norm = grad.norm();
    rep.iterations = it;
    if (rep.gradient_norm < opt.tolerance) {
      rep.converged = true;
      break;
    }
    Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
    H.diagonal() += penalty;
    const Eigen::VectorXd step = H.ldlt().solve(grad);
    // Backtracking keeps the ascent monotone far from the optimum.
    double t = 1.0;
    Eigen::VectorXd next = beta + step;
    double next_obj = objective(next);
    while (next_obj < obj - 1e-12 * std::abs(obj) && t > 1e-8) {
      t *= 0.5;
      next = beta + t * step;
      next_obj = objective(next);
    }
    beta = next;
    obj = next_obj;
  }
  if (!rep.converged) {
    const Eigen::VectorXd z = X * beta;
    Eigen::VectorXd mu(n);
    for (Eigen::Index i = 0; i < n; ++i) mu(i) = sigmoid(z(i));
    rep.gradient_norm = (X.transpose() * (y - mu) - penalty.cwiseProduct(beta)).norm();
    rep.converged = rep.gradient_norm < opt.tolerance;
  }
  if (report) *report = rep;

  LogisticModel m;
  m.bias = beta(0);
  for (std::size_t j = 0; j < d; ++j) m.weights.push_back(beta(static_cast<Eigen::Index>(j + 1)));
  m.feature_names = names.empty() ? std::vector<std::string>(d) : std::move(names);
  return m;
}

/// Area under the ROC curve by the rank-sum statistic, ties sharing ranks.
inline double auc_rank(const std::vector<double>& scores, const std::vector<bool>& labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i]) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return 0.5;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

inline double brier_score(const std::vector<double>& probs, const std::vector<bool>& labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double e = probs[i] - (labels[i] ? 1.0 : 0.0);
    s += e * e;
  }
  return probs.empty() ? 0.0 : s / static_cast<double>(probs.size());
}

struct XgEvaluation {
  double brier = 0.0;
  double auc = 0.0;
  std::size_t folds = 0;
  std::vector<std::string> warnings;
  std::vector<double> out_of_fold;  // probability per shot
};

/// Stratified k-fold cross-validation with out-of-fold predictions.
inline XgEvaluation evaluate_xg(const std::vector<ShotRecord>& shots, std::size_t folds = 5,
                                std::uint64_t seed = 1, const XgFitOptions& opt = {}) {
  if (folds < 2) throw ValidationError("evaluate_xg: at least 2 folds");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < shots.size(); ++i) (shots[i].goal ? pos : neg).push_back(i);
  Rng rng(seed);
  rng.shuffle(pos);
  rng.shuffle(neg);
  std::vector<std::vector<std::size_t>> fold(folds);
  for (std::size_t k = 0; k < pos.size(); ++k) fold[k % folds].push_back(pos[k]);
  for (std::size_t k = 0; k < neg.size(); ++k) fold[(pos.size() + k) % folds].push_back(neg[k]);

  XgEvaluation ev;
  // A fold holding a single class is merged into its neighbour.
  auto single_class = [&](const std::vector<std::size_t>& f) {
    std::size_t g = 0;
    for (auto i : f) g += shots[i].goal;
    return g == 0 || g == f.size();
  };
  for (std::size_t k = 0; k < fold.size() && fold.size() > 2;) {
    if (single_class(fold[k])) {
      const std::size_t into = k + 1 < fold.size() ? k + 1 : k - 1;
      ev.warnings.push_back("fold " + std::to_string(k) + " has one class; merged into fold " +
                            std::to_string(into));
      fold[into].insert(fold[into].end(), fold[k].begin(), fold[k].end());
      fold.erase(fold.begin() + static_cast<std::ptrdiff_t>(k));
      k = 0;
    } else {
      ++k;
    }
  }
  ev.folds = fold.size();
  ev.out_of_fold.assign(shots.size(), 0.0);
  for (std::size_t k = 0; k < fold.size(); ++k) {
    std::vector<char> held(shots.size(), 0);
    for (auto i : fold[k]) held[i] = 1;
    std::vector<ShotRecord> train;
    train.reserve(shots.size());
    for (std::size_t i = 0; i < shots.size(); ++i)
      if (!held[i]) train.push_back(shots[i]);
    const auto model = fit_xg(train, opt);
    for (auto i : fold[k]) ev.out_of_fold[i] = predict_goal_prob(model, shots[i].features);
  }
  std::vector<bool> labels(shots.size());
  for (std::size_t i = 0; i < shots.size(); ++i) labels[i] = shots[i].goal;
  ev.brier = brier_score(ev.out_of_fold, labels);
  ev.auc = auc_rank(ev.out_of_fold, labels);
  return ev;
}

inline std::string serialize_model(const LogisticModel& m) {
  std::string names;
  for (std::size_t j = 0; j < m.feature_names.size(); ++j) names += (j ? "," : "") + m.feature_names[j];
  std::string out = "xg-logistic v1 features=" + std::to_string(m.weights.size()) + " names=" + names + "\n";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g\n", m.bias);
  out += buf;
  for (double w : m.weights) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", w);
    out += buf;
  }
  return out;
}

inline LogisticModel parse_model(std::string_view content) {
  const auto rows = text::lines(content);
  if (rows.empty() || !rows[0].starts_with("xg-logistic v1")) throw ParseError("not an xg model file", 1);
  LogisticModel m;
  const auto header = rows[0];
  const auto np = header.find("names=");
  if (np != std::string_view::npos) {
    const auto list = header.substr(np + 6);
    if (!list.empty())
      for (auto n : text::split(list, ',')) m.feature_names.emplace_back(n);
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto v = text::parse_double(text::trim(rows[i]));
    if (!v) throw ParseError("bad coefficient", i + 1);
    if (i == 1) m.bias = *v;
    else m.weights.push_back(*v);
  }
  if (rows.size() < 2) throw ParseError("missing bias", 2);
  if (!m.feature_names.empty() && m.feature_names.size() != m.weights.size())
    throw ParseError("feature names do not match weights", 1);
  return m;
}

}  // namespace prl
