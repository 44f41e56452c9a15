#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "possession_rl/random.hpp"
#include "possession_rl/state_builder.hpp"
#include "possession_rl/vocabulary.hpp"

namespace prl {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

// Aligned so vectorized kernels take the same path on every run.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

/// Conv1d (same padding) → ReLU → LSTM over the true length → dense → softmax.
struct NetArch {
  std::size_t input_width = 20;
  std::size_t filters = 32;
  std::size_t kernel = 3;
  std::size_t hidden = 100;
  std::size_t classes = kEndingCount;
  std::size_t steps = kMaxActions;

  std::size_t conv_parameters() const { return filters * kernel * input_width + filters; }
  std::size_t lstm_parameters() const { return 4 * hidden * (filters + hidden) + 4 * hidden; }
  std::size_t dense_parameters() const { return classes * hidden + classes; }
  std::size_t parameter_count() const { return conv_parameters() + lstm_parameters() + dense_parameters(); }

  void validate() const {
    if (input_width == 0 || filters == 0 || hidden == 0 || classes < 2 || steps == 0)
      throw ValidationError("network architecture has an empty dimension");
    if (kernel % 2 == 0) throw ValidationError("convolution kernel must be odd for same padding");
  }
  friend bool operator==(const NetArch&, const NetArch&) = default;
};

inline NetArch default_arch(StateType type) {
  NetArch a;
  a.input_width = state_width(type);
  return a;
}

struct TensorSpec {
  std::string name;
  std::size_t rows = 0, cols = 0, offset = 0;
  std::size_t size() const { return rows * cols; }
};

struct NetBatch {
  std::size_t size = 0;
  std::vector<Eigen::MatrixXd> x;       // per step, width × batch, standardized, zero when padded
  std::vector<Eigen::RowVectorXd> mask; // per step, 1 where the step is inside the true length
  std::size_t max_length = 0;
};

struct NetCache {
  std::vector<Eigen::MatrixXd> act;  // ReLU output per step
  std::vector<Eigen::MatrixXd> h, c; // h[t], c[t] are the states entering step t; index steps holds the final
  std::vector<Eigen::MatrixXd> gi, gf, gg, go;
  Eigen::MatrixXd logits;
};

class SequenceNet {
 public:
  SequenceNet() = default;

  SequenceNet(const NetArch& arch, std::uint64_t seed) : arch_(arch) {
    arch_.validate();
    layout();
    params_.assign(arch_.parameter_count(), 0.0);
    Rng rng(seed);
    auto glorot = [&](const TensorSpec& s, double fan_in, double fan_out) {
      const double lim = std::sqrt(6.0 / (fan_in + fan_out));
      for (std::size_t i = 0; i < s.size(); ++i) params_[s.offset + i] = rng.uniform(-lim, lim);
    };
    const double k = static_cast<double>(arch_.kernel);
    glorot(spec("conv.weight"), k * static_cast<double>(arch_.input_width), k * static_cast<double>(arch_.filters));
    glorot(spec("lstm.weight_ih"), static_cast<double>(arch_.filters), static_cast<double>(4 * arch_.hidden));
    glorot(spec("lstm.weight_hh"), static_cast<double>(arch_.hidden), static_cast<double>(4 * arch_.hidden));
    glorot(spec("dense.weight"), static_cast<double>(arch_.hidden), static_cast<double>(arch_.classes));
    const auto& b = spec("lstm.bias");
    for (std::size_t i = arch_.hidden; i < 2 * arch_.hidden; ++i) params_[b.offset + i] = 1.0;  // forget gate
    mean_.assign(arch_.input_width, 0.0);
    scale_.assign(arch_.input_width, 1.0);
  }

  const NetArch& arch() const { return arch_; }
  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }
  const std::vector<TensorSpec>& specs() const { return specs_; }
  std::size_t parameter_count() const { return params_.size(); }
  const std::vector<double>& input_mean() const { return mean_; }
  const std::vector<double>& input_scale() const { return scale_; }

  const TensorSpec& spec(std::string_view name) const {
    for (const auto& s : specs_)
      if (s.name == name) return s;
    throw ValidationError("unknown parameter tensor " + std::string(name));
  }

  /// Column means and standard deviations over the valid rows of the given samples.
  void fit_standardization(const StateTensor& t, std::span<const std::size_t> idx) {
    check_width(t.width);
    std::vector<double> sum(arch_.input_width, 0.0), sq(arch_.input_width, 0.0);
    double n = 0.0;
    for (auto i : idx)
      for (std::size_t r = 0; r < t.lengths[i]; ++r) {
        n += 1.0;
        for (std::size_t c = 0; c < arch_.input_width; ++c) {
          const double v = t.at(i, r, c);
          sum[c] += v;
          sq[c] += v * v;
        }
      }
    for (std::size_t c = 0; c < arch_.input_width; ++c) {
      if (n == 0.0) {
        mean_[c] = 0.0;
        scale_[c] = 1.0;
        continue;
      }
      mean_[c] = sum[c] / n;
      const double var = std::max(0.0, sq[c] / n - mean_[c] * mean_[c]);
      scale_[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
  }

  void set_standardization(std::vector<double> mean, std::vector<double> scale) {
    if (mean.size() != arch_.input_width || scale.size() != arch_.input_width)
      throw ValidationError("standardization width mismatch");
    mean_ = std::move(mean);
    scale_ = std::move(scale);
  }

  NetBatch make_batch(const StateTensor& t, std::span<const std::size_t> idx) const {
    check_width(t.width);
    NetBatch b;
    b.size = idx.size();
    const auto B = static_cast<Eigen::Index>(idx.size());
    const auto W = static_cast<Eigen::Index>(arch_.input_width);
    b.x.assign(arch_.steps, Eigen::MatrixXd::Zero(W, B));
    b.mask.assign(arch_.steps, Eigen::RowVectorXd::Zero(B));
    for (Eigen::Index j = 0; j < B; ++j) {
      const std::size_t i = idx[static_cast<std::size_t>(j)];
      const std::size_t len = std::min(t.lengths[i], arch_.steps);
      b.max_length = std::max(b.max_length, len);
      for (std::size_t r = 0; r < len; ++r) {
        b.mask[r](j) = 1.0;
        for (Eigen::Index c = 0; c < W; ++c)
          b.x[r](c, j) = (t.at(i, r, static_cast<std::size_t>(c)) - mean_[c]) / scale_[c];
      }
    }
    return b;
  }

  NetBatch make_batch(const PossessionState& s) const {
    StateTensor t;
    t.append(s);
    const std::size_t zero = 0;
    return make_batch(t, std::span<const std::size_t>(&zero, 1));
  }

  /// Logits, classes × batch.
  Eigen::MatrixXd forward(const NetBatch& b, NetCache* cache = nullptr) const {
    const auto B = static_cast<Eigen::Index>(b.size);
    const auto H = static_cast<Eigen::Index>(arch_.hidden);
    NetCache local;
    NetCache& k = cache ? *cache : local;
    const std::size_t T = b.max_length;
    k.act.assign(T, {});
    k.h.assign(T + 1, Eigen::MatrixXd::Zero(H, B));
    k.c.assign(T + 1, Eigen::MatrixXd::Zero(H, B));
    k.gi.assign(T, {});
    k.gf.assign(T, {});
    k.gg.assign(T, {});
    k.go.assign(T, {});

    const auto wih = mat("lstm.weight_ih");
    const auto whh = mat("lstm.weight_hh");
    const auto bl = vec("lstm.bias");
    for (std::size_t t = 0; t < T; ++t) {
      k.act[t] = conv_step(b, t).cwiseMax(0.0);
      Eigen::MatrixXd g = wih * k.act[t] + whh * k.h[t];
      g.colwise() += bl;
      k.gi[t] = sigmoid(g.topRows(H));
      k.gf[t] = sigmoid(g.middleRows(H, H));
      k.gg[t] = g.middleRows(2 * H, H).array().tanh().matrix();
      k.go[t] = sigmoid(g.bottomRows(H));
      Eigen::MatrixXd c = k.gf[t].cwiseProduct(k.c[t]) + k.gi[t].cwiseProduct(k.gg[t]);
      Eigen::MatrixXd h = k.go[t].cwiseProduct(c.array().tanh().matrix());
      const Eigen::RowVectorXd& m = b.mask[t];
      for (Eigen::Index j = 0; j < B; ++j)
        if (m(j) == 0.0) {
          c.col(j) = k.c[t].col(j);
          h.col(j) = k.h[t].col(j);
        }
      k.c[t + 1] = std::move(c);
      k.h[t + 1] = std::move(h);
    }
    Eigen::MatrixXd logits = mat("dense.weight") * k.h[T];
    logits.colwise() += vec("dense.bias");
    k.logits = logits;
    return logits;
  }

  /// Accumulates d(objective)/d(params) into grad given d(objective)/d(logits).
  void backward(const NetBatch& b, const NetCache& k, const Eigen::MatrixXd& dlogits,
                ParamVector& grad) const {
    if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);
    const auto B = static_cast<Eigen::Index>(b.size);
    const auto H = static_cast<Eigen::Index>(arch_.hidden);
    const std::size_t T = b.max_length;
    gmat(grad, "dense.weight") += dlogits * k.h[T].transpose();
    gvec(grad, "dense.bias") += dlogits.rowwise().sum();
    Eigen::MatrixXd dh = mat("dense.weight").transpose() * dlogits;
    Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(H, B);

    const auto wih = mat("lstm.weight_ih");
    const auto whh = mat("lstm.weight_hh");
    auto gwih = gmat(grad, "lstm.weight_ih");
    auto gwhh = gmat(grad, "lstm.weight_hh");
    auto gbl = gvec(grad, "lstm.bias");
    Eigen::MatrixXd dgate(4 * H, B);
    for (std::size_t t = T; t-- > 0;) {
      const Eigen::RowVectorXd& m = b.mask[t];
      const Eigen::ArrayXXd tc = k.c[t + 1].array().tanh();
      const Eigen::ArrayXXd o = k.go[t].array(), i = k.gi[t].array(), f = k.gf[t].array(), g = k.gg[t].array();
      const Eigen::ArrayXXd dcn = dc.array() + dh.array() * o * (1.0 - tc * tc);
      dgate.topRows(H) = (dcn * g * i * (1.0 - i)).matrix();
      dgate.middleRows(H, H) = (dcn * k.c[t].array() * f * (1.0 - f)).matrix();
      dgate.middleRows(2 * H, H) = (dcn * i * (1.0 - g * g)).matrix();
      dgate.bottomRows(H) = (dh.array() * tc * o * (1.0 - o)).matrix();
      Eigen::MatrixXd dc_prev = (dcn * f).matrix();
      for (Eigen::Index j = 0; j < B; ++j)
        if (m(j) == 0.0) {
          dgate.col(j).setZero();
          dc_prev.col(j) = dc.col(j);
        }
      gwih.noalias() += dgate * k.act[t].transpose();
      gwhh.noalias() += dgate * k.h[t].transpose();
      gbl += dgate.rowwise().sum();
      Eigen::MatrixXd dh_prev = whh.transpose() * dgate;
      for (Eigen::Index j = 0; j < B; ++j)
        if (m(j) == 0.0) dh_prev.col(j) = dh.col(j);
      const Eigen::MatrixXd dz = (wih.transpose() * dgate).cwiseProduct(
          (k.act[t].array() > 0.0).cast<double>().matrix());
      conv_backward(b, t, dz, grad);
      dh = std::move(dh_prev);
      dc = std::move(dc_prev);
    }
  }

  /// Column-wise softmax of the logits.
  static Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p = logits;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double mx = p.col(j).maxCoeff();
      p.col(j) = (p.col(j).array() - mx).exp().matrix();
      p.col(j) /= p.col(j).sum();
    }
    return p;
  }

  Eigen::MatrixXd probabilities(const NetBatch& b) const { return softmax(forward(b)); }

  std::array<double, kEndingCount> distribution(const PossessionState& s) const {
    if (arch_.classes != kEndingCount) throw ValidationError("network does not have 4 outputs");
    const Eigen::MatrixXd p = probabilities(make_batch(s));
    return {p(0, 0), p(1, 0), p(2, 0), p(3, 0)};
  }

  void check_width(std::size_t width) const {
    if (width != arch_.input_width)
      throw ValidationError("state width " + std::to_string(width) + " does not match network width " +
                            std::to_string(arch_.input_width));
  }

  // Binary checkpoint: magic, version, architecture, then named f64 tensors.
  std::string serialize() const {
    std::string out = "PRLCKPT1";
    put<std::uint32_t>(out, 1);
    for (std::size_t v : {arch_.input_width, arch_.filters, arch_.kernel, arch_.hidden, arch_.classes, arch_.steps})
      put<std::uint64_t>(out, v);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(specs_.size() + 2));
    auto tensor = [&](const std::string& name, std::size_t rows, std::size_t cols, const double* data) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out += name;
      put<std::uint64_t>(out, rows);
      put<std::uint64_t>(out, cols);
      out.append(reinterpret_cast<const char*>(data), rows * cols * sizeof(double));
    };
    tensor("input.mean", mean_.size(), 1, mean_.data());
    tensor("input.scale", scale_.size(), 1, scale_.data());
    for (const auto& s : specs_) tensor(s.name, s.rows, s.cols, params_.data() + s.offset);
    return out;
  }

  static SequenceNet deserialize(std::string_view in) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
      if (pos + n > in.size()) throw ValidationError("checkpoint truncated");
    };
    need(8);
    if (in.substr(0, 8) != "PRLCKPT1") throw ValidationError("not a network checkpoint");
    pos = 8;
    if (get<std::uint32_t>(in, pos, need) != 1) throw ValidationError("unsupported checkpoint version");
    NetArch a;
    a.input_width = get<std::uint64_t>(in, pos, need);
    a.filters = get<std::uint64_t>(in, pos, need);
    a.kernel = get<std::uint64_t>(in, pos, need);
    a.hidden = get<std::uint64_t>(in, pos, need);
    a.classes = get<std::uint64_t>(in, pos, need);
    a.steps = get<std::uint64_t>(in, pos, need);
    a.validate();
    SequenceNet net;
    net.arch_ = a;
    net.layout();
    net.params_.assign(a.parameter_count(), 0.0);
    net.mean_.assign(a.input_width, 0.0);
    net.scale_.assign(a.input_width, 1.0);
    const auto count = get<std::uint32_t>(in, pos, need);
    std::size_t seen = 0;
    for (std::uint32_t n = 0; n < count; ++n) {
      const auto len = get<std::uint32_t>(in, pos, need);
      need(len);
      const std::string name(in.substr(pos, len));
      pos += len;
      const auto rows = get<std::uint64_t>(in, pos, need);
      const auto cols = get<std::uint64_t>(in, pos, need);
      need(rows * cols * sizeof(double));
      double* dst = nullptr;
      std::size_t expect = 0;
      if (name == "input.mean") {
        dst = net.mean_.data();
        expect = a.input_width;
      } else if (name == "input.scale") {
        dst = net.scale_.data();
        expect = a.input_width;
      } else {
        const auto& s = net.spec(name);
        if (s.rows != rows || s.cols != cols) throw ValidationError("checkpoint shape mismatch for " + name);
        dst = net.params_.data() + s.offset;
        expect = s.size();
        ++seen;
      }
      if (rows * cols != expect) throw ValidationError("checkpoint size mismatch for " + name);
      std::memcpy(dst, in.data() + pos, expect * sizeof(double));
      pos += expect * sizeof(double);
    }
    if (seen != net.specs_.size()) throw ValidationError("checkpoint is missing tensors");
    return net;
  }

 private:
  using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
  using Map = Eigen::Map<Eigen::MatrixXd>;

  void layout() {
    specs_.clear();
    std::size_t off = 0;
    auto add = [&](std::string name, std::size_t r, std::size_t c) {
      specs_.push_back({std::move(name), r, c, off});
      off += r * c;
    };
    // conv.weight holds `kernel` consecutive filters × width blocks.
    add("conv.weight", arch_.filters, arch_.kernel * arch_.input_width);
    add("conv.bias", arch_.filters, 1);
    add("lstm.weight_ih", 4 * arch_.hidden, arch_.filters);
    add("lstm.weight_hh", 4 * arch_.hidden, arch_.hidden);
    add("lstm.bias", 4 * arch_.hidden, 1);
    add("dense.weight", arch_.classes, arch_.hidden);
    add("dense.bias", arch_.classes, 1);
  }

  ConstMap mat(std::string_view name) const {
    const auto& s = spec(name);
    return ConstMap(params_.data() + s.offset, static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
  }
  Eigen::Map<const Eigen::VectorXd> vec(std::string_view name) const {
    const auto& s = spec(name);
    return Eigen::Map<const Eigen::VectorXd>(params_.data() + s.offset, static_cast<Eigen::Index>(s.size()));
  }
  Map gmat(ParamVector& g, std::string_view name) const {
    const auto& s = spec(name);
    return Map(g.data() + s.offset, static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
  }
  Eigen::Map<Eigen::VectorXd> gvec(ParamVector& g, std::string_view name) const {
    const auto& s = spec(name);
    return Eigen::Map<Eigen::VectorXd>(g.data() + s.offset, static_cast<Eigen::Index>(s.size()));
  }

  ConstMap conv_block(std::size_t k) const {
    const auto& s = spec("conv.weight");
    const auto W = arch_.input_width;
    return ConstMap(params_.data() + s.offset + k * arch_.filters * W, static_cast<Eigen::Index>(arch_.filters),
                    static_cast<Eigen::Index>(W));
  }

  Eigen::MatrixXd conv_step(const NetBatch& b, std::size_t t) const {
    Eigen::MatrixXd z(static_cast<Eigen::Index>(arch_.filters), static_cast<Eigen::Index>(b.size));
    z.colwise() = vec("conv.bias");
    const auto half = static_cast<long>(arch_.kernel / 2);
    for (std::size_t k = 0; k < arch_.kernel; ++k) {
      const long src = static_cast<long>(t) + static_cast<long>(k) - half;
      if (src < 0 || src >= static_cast<long>(arch_.steps)) continue;
      z.noalias() += conv_block(k) * b.x[static_cast<std::size_t>(src)];
    }
    return z;
  }

  void conv_backward(const NetBatch& b, std::size_t t, const Eigen::MatrixXd& dz, ParamVector& g) const {
    const auto& s = spec("conv.weight");
    const auto W = arch_.input_width;
    const auto half = static_cast<long>(arch_.kernel / 2);
    for (std::size_t k = 0; k < arch_.kernel; ++k) {
      const long src = static_cast<long>(t) + static_cast<long>(k) - half;
      if (src < 0 || src >= static_cast<long>(arch_.steps)) continue;
      Map gk(g.data() + s.offset + k * arch_.filters * W, static_cast<Eigen::Index>(arch_.filters),
             static_cast<Eigen::Index>(W));
      gk.noalias() += dz * b.x[static_cast<std::size_t>(src)].transpose();
    }
    gvec(g, "conv.bias") += dz.rowwise().sum();
  }

  template <class M>
  static Eigen::MatrixXd sigmoid(const M& x) {
    return (1.0 / (1.0 + (-x.array()).exp())).matrix();
  }

  template <class T>
  static void put(std::string& out, T v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  template <class T, class Need>
  static T get(std::string_view in, std::size_t& pos, Need& need) {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }

  NetArch arch_;
  std::vector<TensorSpec> specs_;
  ParamVector params_;
  std::vector<double> mean_, scale_;
};

}  // namespace prl
