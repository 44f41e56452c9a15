#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "possession_rl/outcome_classifier.hpp"
#include "support/planted_states.hpp"

namespace {

using namespace prl;

NetArch tiny_arch(std::size_t width) {
  NetArch a;
  a.input_width = width;
  a.filters = 2;
  a.hidden = 1;
  a.steps = kMaxActions;
  return a;
}

double batch_loss(const SequenceNet& net, const NetBatch& b, std::span<const std::size_t> y) {
  return cross_entropy(net.forward(b), y, nullptr);
}

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

// Central differences over the given parameter indices, compared as a slice.
GradCheck check_gradient(SequenceNet net, const NetBatch& b, std::span<const std::size_t> y,
                         const std::vector<std::size_t>& which) {
  NetCache cache;
  Eigen::MatrixXd dl;
  cross_entropy(net.forward(b, &cache), y, &dl);
  ParamVector grad(net.parameter_count(), 0.0);
  net.backward(b, cache, dl, grad);
  double diff = 0.0, na = 0.0, nn = 0.0;
  const double h = 1e-5;
  for (auto i : which) {
    const double keep = net.params()[i];
    net.params()[i] = keep + h;
    const double up = batch_loss(net, b, y);
    net.params()[i] = keep - h;
    const double down = batch_loss(net, b, y);
    net.params()[i] = keep;
    const double numeric = (up - down) / (2 * h);
    diff += (numeric - grad[i]) * (numeric - grad[i]);
    na += grad[i] * grad[i];
    nn += numeric * numeric;
  }
  GradCheck r;
  r.checked = which.size();
  r.max_rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return r;
}

TEST(SequenceNet, ParameterCountsAreStable) {
  EXPECT_EQ(default_arch(StateType::III).parameter_count(), 1952u + 53200u + 404u);
  EXPECT_EQ(SequenceNet(default_arch(StateType::III), 1).parameter_count(), 55556u);
  EXPECT_EQ(default_arch(StateType::I).parameter_count(), 32u * 3 * 17 + 32 + 53200 + 404);
  EXPECT_EQ(default_arch(StateType::II).parameter_count(), 32u * 3 * 61 + 32 + 53200 + 404);
  EXPECT_EQ(tiny_arch(3).parameter_count(), 2u * 3 * 3 + 2 + 4 * 1 * 3 + 4 + 4 + 4);
}

TEST(SequenceNet, ZeroOutputWeightsGiveUniform) {
  const auto t = prl::testing::planted_rule_tensor(5, 3);
  SequenceNet net(default_arch(StateType::I), 2);
  const auto& w = net.spec("dense.weight");
  const auto& b = net.spec("dense.bias");
  std::fill_n(net.params().begin() + static_cast<std::ptrdiff_t>(w.offset), w.size() + b.size(), 0.0);
  const auto p = predict_outcome_distribution(net, t.state(0));
  for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(SequenceNet, DistributionsSumToOneAndRepeatExactly) {
  const auto t = prl::testing::planted_rule_tensor(50, 4);
  SequenceNet net(default_arch(StateType::I), 9);
  const auto all = predict_all(net, t);
  for (std::size_t i = 0; i < t.size(); ++i) {
    double s = 0.0;
    for (double v : all[i]) {
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
    const auto single = predict_outcome_distribution(net, t.state(i));
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(single[c], all[i][c], 1e-12);
  }
  const auto again = predict_outcome_distribution(net, t.state(7));
  EXPECT_EQ(again, predict_outcome_distribution(net, t.state(7)));
}

TEST(SequenceNet, PaddedRowsNeverMatter) {
  auto t = prl::testing::planted_rule_tensor(40, 5);
  SequenceNet net(default_arch(StateType::I), 1);
  const auto before = predict_all(net, t);
  Rng rng(2);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t r = t.lengths[i]; r < kMaxActions; ++r)
      for (std::size_t c = 0; c < t.width; ++c)
        t.data[(i * kMaxActions + r) * t.width + c] = static_cast<float>(rng.normal(0, 50));
  const auto after = predict_all(net, t);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(before[i], after[i]);
}

TEST(SequenceNet, AnalyticGradientMatchesFiniteDifferencesTiny) {
  const auto t = prl::testing::planted_rule_tensor(2, 6);
  SequenceNet net(tiny_arch(t.width), 3);
  const std::vector<std::size_t> idx = {0, 1};
  net.fit_standardization(t, idx);
  const auto b = net.make_batch(t, idx);
  const std::vector<std::size_t> y = {index(t.labels[0]), index(t.labels[1])};
  std::vector<std::size_t> all(net.parameter_count());
  std::iota(all.begin(), all.end(), 0);
  const auto r = check_gradient(net, b, y, all);
  EXPECT_LT(r.max_rel, 1e-4);
}

TEST(SequenceNet, AnalyticGradientMatchesFiniteDifferencesPerTensor) {
  const auto t = prl::testing::planted_rule_tensor(2, 8);
  SequenceNet net(default_arch(StateType::I), 4);
  const std::vector<std::size_t> idx = {0, 1};
  net.fit_standardization(t, idx);
  const auto b = net.make_batch(t, idx);
  const std::vector<std::size_t> y = {index(t.labels[0]), index(t.labels[1])};
  Rng rng(10);
  for (const auto& s : net.specs()) {
    std::vector<std::size_t> slice;
    for (int k = 0; k < 10; ++k) slice.push_back(s.offset + rng.uniform_index(s.size()));
    const auto r = check_gradient(net, b, y, slice);
    EXPECT_LT(r.max_rel, 1e-4) << s.name;
  }
}

TEST(SequenceNet, CheckpointRoundTrip) {
  auto t = prl::testing::planted_rule_tensor(120, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto res = train_classifier(t, cfg, tiny_arch(t.width));
  const std::string bytes = res.net.serialize();
  const auto back = SequenceNet::deserialize(bytes);
  EXPECT_EQ(back.arch(), res.net.arch());
  EXPECT_EQ(back.params(), res.net.params());
  EXPECT_EQ(back.input_mean(), res.net.input_mean());
  EXPECT_EQ(back.serialize(), bytes);
  EXPECT_EQ(predict_all(back, t), predict_all(res.net, t));
  EXPECT_THROW(SequenceNet::deserialize(bytes.substr(0, bytes.size() - 3)), ValidationError);
  EXPECT_THROW(SequenceNet::deserialize("nope"), ValidationError);
}

TEST(SequenceNet, WidthMismatchIsRejected) {
  const auto t = prl::testing::planted_rule_tensor(3, 1);
  SequenceNet net(default_arch(StateType::III), 1);
  EXPECT_THROW(predict_outcome_distribution(net, t.state(0)), ValidationError);
}

TEST(Classifier, PreconditionsAreChecked) {
  auto t = prl::testing::planted_rule_tensor(99, 1);
  EXPECT_THROW(train_classifier(t, {}), ValidationError);
  t = prl::testing::planted_rule_tensor(150, 1);
  for (auto& l : t.labels) l = EndingAction::Out;
  EXPECT_THROW(train_classifier(t, {}), ValidationError);
  TrainConfig bad;
  bad.validation_fraction = 1.0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Classifier, NonFiniteLossAborts) {
  auto t = prl::testing::planted_rule_tensor(150, 2);
  t.data[1] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.validation_fraction = 0.99;  // keep the bad sample in training
  EXPECT_THROW(train_classifier(t, cfg, tiny_arch(t.width)), TrainingError);
}

TEST(Classifier, SameSeedSameModel) {
  const auto t = prl::testing::planted_rule_tensor(150, 3);
  TrainConfig cfg;
  cfg.epochs = 2;
  const auto a = train_classifier(t, cfg, tiny_arch(t.width));
  const auto b = train_classifier(t, cfg, tiny_arch(t.width));
  EXPECT_EQ(a.net.params(), b.net.params());
  EXPECT_EQ(serialize_loss_curve(a.curve), serialize_loss_curve(b.curve));
  EXPECT_EQ(a.val_size, 45u);
}

TEST(Classifier, LearnsPlantedRuleWithFallingLoss) {
  const auto t = prl::testing::planted_rule_tensor(6000, 11);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 16;
  const auto res = train_classifier(t, cfg);
  EXPECT_GE(res.curve.back().val_acc, 0.95);
  std::vector<double> avg;
  for (std::size_t e = 4; e < res.curve.size(); ++e) {
    double s = 0.0;
    for (std::size_t k = e - 4; k <= e; ++k) s += res.curve[k].train_loss;
    avg.push_back(s / 5.0);
  }
  for (std::size_t k = 1; k < avg.size(); ++k) EXPECT_LE(avg[k], avg[k - 1]);
  const auto text = serialize_loss_curve(res.curve);
  EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,train_loss,val_loss,val_acc");
}

TEST(Classifier, ShuffledLabelsStayNearLogFour) {
  const auto t = prl::testing::planted_rule_tensor(1500, 12, true);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 16;
  const auto res = train_classifier(t, cfg);
  EXPECT_NEAR(res.curve.back().val_loss, std::log(4.0), 0.05);
}

}  // namespace
