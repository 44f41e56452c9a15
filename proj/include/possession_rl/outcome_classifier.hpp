#pragma once

#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "possession_rl/random.hpp"
#include "possession_rl/sequence_net.hpp"
#include "possession_rl/text.hpp"

namespace prl {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double validation_fraction = 0.30;
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs == 0 || batch_size == 0) throw ValidationError("train config: epochs and batch size must be positive");
    if (!(learning_rate > 0.0)) throw ValidationError("train config: learning rate must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw ValidationError("train config: validation fraction must lie in (0, 1)");
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct ClassifierResult {
  SequenceNet net;
  std::vector<EpochStats> curve;
  std::size_t train_size = 0, val_size = 0;
};

/// Mean cross-entropy of the batch and its gradient with respect to the logits.
inline double cross_entropy(const Eigen::MatrixXd& logits, std::span<const std::size_t> labels,
                            Eigen::MatrixXd* dlogits) {
  const Eigen::MatrixXd p = SequenceNet::softmax(logits);
  const double n = static_cast<double>(logits.cols());
  double loss = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(j)]);
    const double mx = logits.col(j).maxCoeff();
    const double lse = mx + std::log((logits.col(j).array() - mx).exp().sum());
    loss += lse - logits(y, j);
  }
  if (dlogits) {
    *dlogits = p;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) (*dlogits)(static_cast<Eigen::Index>(labels[j]), j) -= 1.0;
    *dlogits /= n;
  }
  return loss / n;
}

struct EvalStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline EvalStats evaluate_classifier(const SequenceNet& net, const StateTensor& t, std::span<const std::size_t> idx,
                                     std::size_t chunk = 256) {
  EvalStats s;
  if (idx.empty()) return s;
  double loss = 0.0, correct = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const auto part = idx.subspan(start, std::min(chunk, idx.size() - start));
    const auto logits = net.forward(net.make_batch(t, part));
    std::vector<std::size_t> y(part.size());
    for (std::size_t j = 0; j < part.size(); ++j) y[j] = index(t.labels[part[j]]);
    loss += cross_entropy(logits, y, nullptr) * static_cast<double>(part.size());
    for (std::size_t j = 0; j < part.size(); ++j) {
      Eigen::Index best = 0;
      logits.col(static_cast<Eigen::Index>(j)).maxCoeff(&best);
      correct += static_cast<std::size_t>(best) == y[j] ? 1.0 : 0.0;
    }
  }
  s.loss = loss / static_cast<double>(idx.size());
  s.accuracy = correct / static_cast<double>(idx.size());
  return s;
}

/// Mini-batch gradient descent on mean cross-entropy. The final consecutive
/// block of samples is held out for validation.
inline ClassifierResult train_classifier(const StateTensor& t, const TrainConfig& cfg,
                                         std::optional<NetArch> arch = std::nullopt) {
  cfg.validate();
  if (t.size() < 100) throw ValidationError("train_classifier: at least 100 possessions are required");
  std::array<std::size_t, kEndingCount> counts{};
  for (auto l : t.labels) ++counts[index(l)];
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2)
    throw ValidationError("train_classifier: labels must cover at least two classes");

  NetArch a = arch.value_or(default_arch(t.type));
  a.input_width = t.width;
  ClassifierResult res{SequenceNet(a, derive_seed(cfg.seed, 0)), {}, 0, 0};
  SequenceNet& net = res.net;

  const auto n_val = static_cast<std::size_t>(std::round(cfg.validation_fraction * static_cast<double>(t.size())));
  const std::size_t n_train = t.size() - n_val;
  std::vector<std::size_t> train(n_train), val(n_val);
  std::iota(train.begin(), train.end(), 0);
  std::iota(val.begin(), val.end(), n_train);
  res.train_size = n_train;
  res.val_size = n_val;
  net.fit_standardization(t, train);

  ParamVector grad(net.parameter_count());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, epoch));
    std::vector<std::size_t> order = train;
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> part(order.data() + start, std::min(cfg.batch_size, order.size() - start));
      const auto batch = net.make_batch(t, part);
      NetCache cache;
      const auto logits = net.forward(batch, &cache);
      std::vector<std::size_t> y(part.size());
      for (std::size_t j = 0; j < part.size(); ++j) y[j] = index(t.labels[part[j]]);
      Eigen::MatrixXd dlogits;
      const double loss = cross_entropy(logits, y, &dlogits);
      if (!std::isfinite(loss))
        throw TrainingError("classifier diverged: non-finite loss in epoch " + std::to_string(epoch) +
                            " at sample offset " + std::to_string(start));
      total += loss * static_cast<double>(part.size());
      std::fill(grad.begin(), grad.end(), 0.0);
      net.backward(batch, cache, dlogits, grad);
      auto& p = net.params();
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.learning_rate * grad[i];
    }
    const auto ev = evaluate_classifier(net, t, val);
    res.curve.push_back({epoch, total / static_cast<double>(n_train), ev.loss, ev.accuracy});
  }
  return res;
}

inline std::array<double, kEndingCount> predict_outcome_distribution(const SequenceNet& net,
                                                                     const PossessionState& s) {
  net.check_width(s.width);
  return net.distribution(s);
}

/// Distributions for every sample of the tensor, in order.
inline std::vector<std::array<double, kEndingCount>> predict_all(const SequenceNet& net, const StateTensor& t,
                                                                 std::size_t chunk = 256) {
  net.check_width(t.width);
  std::vector<std::array<double, kEndingCount>> out(t.size());
  std::vector<std::size_t> idx(t.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const std::span<const std::size_t> part(idx.data() + start, std::min(chunk, idx.size() - start));
    const auto p = net.probabilities(net.make_batch(t, part));
    for (std::size_t j = 0; j < part.size(); ++j)
      for (std::size_t c = 0; c < kEndingCount; ++c)
        out[start + j][c] = p(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j));
  }
  return out;
}

inline std::string serialize_loss_curve(const std::vector<EpochStats>& curve) {
  std::string out = "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& e : curve)
    out += std::to_string(e.epoch) + "," + text::format_double(e.train_loss) + "," +
           text::format_double(e.val_loss) + "," + text::format_double(e.val_acc) + "\n";
  return out;
}

}  // namespace prl
