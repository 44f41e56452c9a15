#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "possession_rl/reward.hpp"
#include "possession_rl/state_builder.hpp"
#include "possession_rl/text.hpp"

namespace prl {

struct OpeStep {
  std::size_t action = 0;
  double q_taken = 0.0;                      // behavioural propensity of the taken action
  double reward = 0.0;                       // raw r_t
  std::array<double, kEndingCount> p{};      // target distribution at s_t
  std::array<double, kEndingCount> qhat{};   // Q̂(s_t, ·)
};

struct OpeEpisode {
  std::size_t id = 0;
  std::vector<OpeStep> steps;
  double ret = 0.0;  // R(τ) used by importance sampling
};

struct OpeConfig {
  double w_min = 0.1;
  double w_max = 10.0;
  bool clip = true;
  double gamma = 0.99;
};

enum class Estimator { IS, DR };

inline std::string_view to_string(Estimator e) { return e == Estimator::IS ? "IS" : "DR"; }

struct OpeResult {
  Estimator estimator = Estimator::IS;
  std::vector<std::size_t> episode_ids;
  std::vector<double> values;
  double mean = 0.0;
  double sd = 0.0;
  std::size_t excluded = 0;
  bool degenerate = false;
};

/// Per-step ratio p/q, clipped when configured. Returns nothing when the step
/// is outside the support of either policy.
inline std::optional<double> importance_ratio(double p, double q, const OpeConfig& cfg) {
  if (!(q > 0.0) || !(p > 0.0)) return std::nullopt;
  const double r = p / q;
  return cfg.clip ? std::clamp(r, cfg.w_min, cfg.w_max) : r;
}

inline void finish(OpeResult& r) {
  r.degenerate = r.values.empty();
  if (r.values.empty()) return;
  double s = 0.0;
  for (double v : r.values) s += v;
  r.mean = s / static_cast<double>(r.values.size());
  double sq = 0.0;
  for (double v : r.values) sq += (v - r.mean) * (v - r.mean);
  r.sd = std::sqrt(sq / static_cast<double>(r.values.size()));
}

inline std::optional<double> is_episode_value(const OpeEpisode& e, const OpeConfig& cfg) {
  double w = 1.0;
  for (const auto& s : e.steps) {
    const auto rho = importance_ratio(s.p[s.action], s.q_taken, cfg);
    if (!rho) return std::nullopt;
    w *= *rho;
  }
  return w * e.ret;
}

/// V^{k} = V̂(s_t) + ρ_t (r_t + γ V^{k−1} − Q̂(s_t, a_t)), V^0 = 0, run backwards.
inline std::optional<double> dr_episode_value(const OpeEpisode& e, const OpeConfig& cfg) {
  double v = 0.0;
  for (std::size_t t = e.steps.size(); t-- > 0;) {
    const auto& s = e.steps[t];
    const auto rho = importance_ratio(s.p[s.action], s.q_taken, cfg);
    if (!rho) return std::nullopt;
    double vhat = 0.0;
    for (std::size_t a = 0; a < kEndingCount; ++a) vhat += s.p[a] * s.qhat[a];
    v = vhat + *rho * (s.reward + cfg.gamma * v - s.qhat[s.action]);
  }
  return v;
}

inline OpeResult ope_value(const std::vector<OpeEpisode>& episodes, Estimator est, const OpeConfig& cfg) {
  OpeResult r;
  r.estimator = est;
  for (const auto& e : episodes) {
    const auto v = est == Estimator::IS ? is_episode_value(e, cfg) : dr_episode_value(e, cfg);
    if (!v) {
      ++r.excluded;
      continue;
    }
    r.episode_ids.push_back(e.id);
    r.values.push_back(*v);
  }
  finish(r);
  return r;
}

inline OpeResult is_value(const std::vector<OpeEpisode>& episodes, const OpeConfig& cfg = {}) {
  return ope_value(episodes, Estimator::IS, cfg);
}

inline OpeResult dr_value(const std::vector<OpeEpisode>& episodes, const OpeConfig& cfg = {}) {
  return ope_value(episodes, Estimator::DR, cfg);
}

// Q̂ regression features: last valid row, mean of valid rows, true length / 10.
inline std::vector<double> qhat_features(const StateTensor& t, std::size_t i) {
  const std::size_t w = t.width;
  std::vector<double> f(2 * w + 1, 0.0);
  const std::size_t n = t.lengths[i];
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < w; ++c) f[w + c] += t.at(i, r, c);
  if (n > 0) {
    for (std::size_t c = 0; c < w; ++c) {
      f[c] = t.at(i, n - 1, c);
      f[w + c] /= static_cast<double>(n);
    }
  }
  f[2 * w] = static_cast<double>(n) / 10.0;
  return f;
}

struct QHatModel {
  std::array<std::vector<double>, kEndingCount> weights;
  std::array<double, kEndingCount> bias{};
  std::array<bool, kEndingCount> empty{};  // action had no samples; its head predicts 0
  std::array<std::size_t, kEndingCount> samples{};

  std::array<double, kEndingCount> predict(const std::vector<double>& x) const {
    std::array<double, kEndingCount> q{};
    for (std::size_t a = 0; a < kEndingCount; ++a) {
      if (empty[a]) continue;
      double z = bias[a];
      for (std::size_t j = 0; j < x.size(); ++j) z += weights[a][j] * x[j];
      q[a] = z;
    }
    return q;
  }
};

/// Ridge regression per action with an unpenalized intercept.
inline QHatModel fit_qhat(const std::vector<std::vector<double>>& features, std::span<const std::size_t> actions,
                          std::span<const double> targets, double lambda = 1.0) {
  if (features.empty()) throw ValidationError("fit_qhat: empty table");
  if (features.size() != actions.size() || actions.size() != targets.size())
    throw ValidationError("fit_qhat: size mismatch");
  const std::size_t d = features.front().size();
  QHatModel m;
  for (std::size_t a = 0; a < kEndingCount; ++a) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < actions.size(); ++i)
      if (actions[i] == a) rows.push_back(i);
    m.samples[a] = rows.size();
    m.weights[a].assign(d, 0.0);
    if (rows.empty()) {
      m.empty[a] = true;
      continue;
    }
    // Centering removes the intercept from the penalized system.
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    double ymean = 0.0;
    for (auto i : rows) {
      for (std::size_t j = 0; j < d; ++j) mean(static_cast<Eigen::Index>(j)) += features[i][j];
      ymean += targets[i];
    }
    mean /= static_cast<double>(rows.size());
    ymean /= static_cast<double>(rows.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) * lambda;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    Eigen::VectorXd x(static_cast<Eigen::Index>(d));
    for (auto i : rows) {
      for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(j)) = features[i][j];
      x -= mean;
      A.selfadjointView<Eigen::Lower>().rankUpdate(x);
      b += x * (targets[i] - ymean);
    }
    A = A.selfadjointView<Eigen::Lower>();
    const Eigen::VectorXd w = A.ldlt().solve(b);
    for (std::size_t j = 0; j < d; ++j) m.weights[a][j] = w(static_cast<Eigen::Index>(j));
    m.bias[a] = ymean - w.dot(mean);
  }
  return m;
}

struct KdeResult {
  std::vector<double> x;
  std::vector<double> density_behavioral, density_optimal;
  double bandwidth_behavioral = 0.0, bandwidth_optimal = 0.0;
  double mean_behavioral = 0.0, mean_optimal = 0.0;
  double var_behavioral = 0.0, var_optimal = 0.0;          // of the values
  double kde_var_behavioral = 0.0, kde_var_optimal = 0.0;  // of the smoothed density
  double above_zero_behavioral = 0.0, above_zero_optimal = 0.0;
  std::vector<std::string> warnings;
};

namespace detail {

struct Moments {
  double mean = 0.0, var = 0.0;
};

inline Moments moments(std::span<const double> v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size());
  return m;
}

inline double scott_bandwidth(std::span<const double> v, const Moments& m, std::vector<std::string>& warnings,
                              const char* label) {
  const double n = static_cast<double>(v.size());
  const double sd = std::sqrt(v.size() > 1 ? m.var * n / (n - 1.0) : 0.0);
  if (sd > 1e-12 * std::max(1.0, std::abs(m.mean))) return sd * std::pow(n, -0.2);
  warnings.push_back(std::string(label) + " values have zero variance; using a narrow kernel");
  return 1e-3 * std::max(1.0, std::abs(m.mean));
}

inline double kde_at(std::span<const double> v, double h, double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  double s = 0.0;
  for (double xi : v) {
    const double u = (x - xi) / h;
    s += std::exp(-0.5 * u * u);
  }
  return s * inv_sqrt_2pi / (h * static_cast<double>(v.size()));
}

}  // namespace detail

/// Gaussian kernel densities with Scott's bandwidth on a shared grid.
inline KdeResult kde_summary(std::span<const double> behavioral, std::span<const double> optimal,
                             std::size_t grid = 512) {
  if (behavioral.size() < 2 || optimal.size() < 2) throw ValidationError("kde_summary: at least 2 values each");
  KdeResult r;
  const auto mb = detail::moments(behavioral), mo = detail::moments(optimal);
  r.mean_behavioral = mb.mean;
  r.mean_optimal = mo.mean;
  r.var_behavioral = mb.var;
  r.var_optimal = mo.var;
  r.bandwidth_behavioral = detail::scott_bandwidth(behavioral, mb, r.warnings, "behavioral");
  r.bandwidth_optimal = detail::scott_bandwidth(optimal, mo, r.warnings, "optimal");
  r.kde_var_behavioral = mb.var + r.bandwidth_behavioral * r.bandwidth_behavioral;
  r.kde_var_optimal = mo.var + r.bandwidth_optimal * r.bandwidth_optimal;
  auto frac_above = [](std::span<const double> v) {
    return static_cast<double>(std::count_if(v.begin(), v.end(), [](double x) { return x > 0.0; })) /
           static_cast<double>(v.size());
  };
  r.above_zero_behavioral = frac_above(behavioral);
  r.above_zero_optimal = frac_above(optimal);

  const double hmin = std::min(r.bandwidth_behavioral, r.bandwidth_optimal);
  const double hmax = std::max(r.bandwidth_behavioral, r.bandwidth_optimal);
  const double lo = std::min(*std::min_element(behavioral.begin(), behavioral.end()),
                             *std::min_element(optimal.begin(), optimal.end())) - 4.0 * hmax;
  const double hi = std::max(*std::max_element(behavioral.begin(), behavioral.end()),
                             *std::max_element(optimal.begin(), optimal.end())) + 4.0 * hmax;
  // Keep the grid fine enough for the narrower kernel.
  const auto needed = static_cast<std::size_t>(std::ceil((hi - lo) / (hmin / 4.0))) + 1;
  const std::size_t points = std::clamp<std::size_t>(needed, grid, 1u << 16);
  r.x.resize(points);
  r.density_behavioral.resize(points);
  r.density_optimal.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    r.x[i] = x;
    r.density_behavioral[i] = detail::kde_at(behavioral, r.bandwidth_behavioral, x);
    r.density_optimal[i] = detail::kde_at(optimal, r.bandwidth_optimal, x);
  }
  return r;
}

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

inline std::string serialize_kde(const KdeResult& k) {
  std::string out = "x,density_behavioral,density_optimal\n";
  for (std::size_t i = 0; i < k.x.size(); ++i)
    out += text::format_double(k.x[i]) + "," + text::format_double(k.density_behavioral[i]) + "," +
           text::format_double(k.density_optimal[i]) + "\n";
  return out;
}

}  // namespace prl
