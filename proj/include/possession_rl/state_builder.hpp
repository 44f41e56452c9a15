#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "possession_rl/match_data.hpp"
#include "possession_rl/pitch.hpp"
#include "possession_rl/possession.hpp"
#include "possession_rl/pressure.hpp"

namespace prl {

enum class StateType { I, II, III };

inline constexpr std::size_t kMaxActions = 10;
inline constexpr std::size_t kHandcraftedFeatures = 6;
inline constexpr std::size_t kLocationFeatures = 2 * kPlayersPerFrame;

inline std::size_t context_width(StateType t) {
  switch (t) {
    case StateType::I: return 0;
    case StateType::II: return kLocationFeatures;
    case StateType::III: return 3;
  }
  return 0;
}

inline std::size_t state_width(StateType t) { return kHandcraftedFeatures + context_width(t) + kActionCount; }

inline std::string_view to_string(StateType t) {
  return t == StateType::I ? "I" : (t == StateType::II ? "II" : "III");
}

inline std::optional<StateType> state_type_from_string(std::string_view s) {
  if (s == "I" || s == "1") return StateType::I;
  if (s == "II" || s == "2") return StateType::II;
  if (s == "III" || s == "3") return StateType::III;
  return std::nullopt;
}

struct ActionFeatures {
  double angle_to_goal = 0.0;
  double distance_to_goal = 0.0;
  double time_remaining = 0.0;
  double home_away = 0.0;
  double action_result = 0.0;
  double body_id = 0.0;
  std::optional<PressureVector> pressure;
  std::optional<std::array<double, kLocationFeatures>> locations;
  bool time_clamped = false;

  std::array<double, kHandcraftedFeatures> handcrafted() const {
    return {angle_to_goal, distance_to_goal, time_remaining, home_away, action_result, body_id};
  }
};

/// Hand-crafted columns of one action, measured at its start location in the
/// acting team's attacking frame.
inline ActionFeatures extract_features(const Event& e) {
  ActionFeatures f;
  f.angle_to_goal = pitch::angle_to_goal(e.x_start, e.y_start);
  f.distance_to_goal = pitch::distance_to_goal(e.x_start, e.y_start);
  const double rem = pitch::kHalfLengthSeconds - e.time_s;
  f.time_clamped = rem < 0.0;
  f.time_remaining = std::max(0.0, rem);
  f.home_away = e.team == Team::Home ? 1.0 : 0.0;
  f.action_result = e.result == ActionResult::Successful ? 1.0 : 0.0;
  f.body_id = static_cast<double>(static_cast<int>(e.body));
  return f;
}

/// 44 normalized coordinates: the acting team's 11 players first, then the
/// opponents, all in the acting team's attacking frame.
inline std::array<double, kLocationFeatures> location_features(const Frame& frame, Team acting) {
  std::array<double, kLocationFeatures> out{};
  std::size_t k = 0;
  for (Team side : {acting, other(acting)}) {
    for (const auto& p : frame.players) {
      if (p.team != side) continue;
      double x = p.x, y = p.y;
      if (acting == Team::Away) {
        x = pitch::mirror_x(x);
        y = pitch::mirror_y(y);
      }
      if (k == kLocationFeatures) throw ValidationError("frame holds more than 22 players");
      out[k++] = x / pitch::kLength;
      out[k++] = y / pitch::kWidth;
    }
  }
  if (k != kLocationFeatures) throw ValidationError("frame at t=" + text::format_double(frame.time_s) +
                                                    " does not hold 11 players per team");
  return out;
}

/// Nearest-frame lookup for events, with pressure counts computed on demand.
class TrackingIndex {
 public:
  TrackingIndex() = default;
  explicit TrackingIndex(const std::vector<Frame>* frames) : frames_(frames) {
    if (!frames_) return;
    for (std::size_t i = 0; i < frames_->size(); ++i) by_match_[(*frames_)[i].match_id].push_back(i);
    local_.resize(frames_->size());
    for (auto& [m, idx] : by_match_) {
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::size_t a, std::size_t b) { return (*frames_)[a].time_s < (*frames_)[b].time_s; });
      for (std::size_t k = 0; k < idx.size(); ++k) local_[idx[k]] = k;
    }
  }

  bool empty() const { return !frames_ || frames_->empty(); }

  /// Precomputed pressures, keyed by (match, frame time).
  void set_pressures(const std::vector<FramePressure>& rows) {
    for (const auto& r : rows) given_[{r.match_id, r.time_s}] = r.z;
  }

  std::optional<std::size_t> nearest(const std::string& match, int half, double time_s) const {
    if (!frames_) return std::nullopt;
    auto it = by_match_.find(match);
    if (it == by_match_.end() || it->second.empty()) return std::nullopt;
    const auto& idx = it->second;
    const double t = (half - 1) * pitch::kHalfLengthSeconds + time_s;
    auto pos = std::lower_bound(idx.begin(), idx.end(), t,
                                [&](std::size_t i, double v) { return (*frames_)[i].time_s < v; });
    if (pos == idx.end()) return idx.back();
    if (pos == idx.begin()) return *pos;
    const std::size_t hi = *pos, lo = *(pos - 1);
    return t - (*frames_)[lo].time_s <= (*frames_)[hi].time_s - t ? lo : hi;
  }

  const Frame& frame(std::size_t i) const { return (*frames_)[i]; }

  PressureVector pressure(std::size_t i) {
    const Frame& f = (*frames_)[i];
    auto g = given_.find({f.match_id, f.time_s});
    if (g != given_.end()) return g->second;
    auto c = cache_.find(i);
    if (c != cache_.end()) return c->second;
    const auto& states = velocities_for(f.match_id);
    const auto z = pressure_counts(f, states[local_[i]]);
    cache_[i] = z;
    return z;
  }

 private:
  const std::vector<FrameStates>& velocities_for(const std::string& match) {
    auto it = velocities_.find(match);
    if (it != velocities_.end()) return it->second;
    std::vector<Frame> copy;
    for (auto i : by_match_.at(match)) copy.push_back((*frames_)[i]);
    return velocities_[match] = compute_velocities(copy);
  }

  const std::vector<Frame>* frames_ = nullptr;
  std::map<std::string, std::vector<std::size_t>> by_match_;
  std::vector<std::size_t> local_;  // position of each frame within its match
  std::map<std::pair<std::string, double>, PressureVector> given_;
  std::map<std::size_t, PressureVector> cache_;
  std::map<std::string, std::vector<FrameStates>> velocities_;
};

/// Features of one action with the context the state type needs.
inline ActionFeatures action_features(const Event& e, StateType type, TrackingIndex& tracking) {
  ActionFeatures f = extract_features(e);
  if (type == StateType::I) return f;
  const auto fi = tracking.nearest(e.match_id, e.half, e.time_s);
  if (!fi) throw ValidationError("no tracking frame for match " + e.match_id);
  if (type == StateType::II) {
    f.locations = location_features(tracking.frame(*fi), e.team);
  } else {
    f.pressure = tracking.pressure(*fi);
  }
  return f;
}

struct PossessionState {
  StateType type = StateType::III;
  std::size_t width = 0;
  std::vector<float> tensor;  // kMaxActions × width, row-major
  std::size_t true_length = 0;
  EndingAction label = EndingAction::Error;

  float at(std::size_t row, std::size_t col) const { return tensor[row * width + col]; }
};

inline void write_state_row(float* row, StateType type, const ActionFeatures& f, Action action) {
  std::size_t c = 0;
  for (double v : f.handcrafted()) row[c++] = static_cast<float>(v);
  if (type == StateType::II) {
    if (!f.locations) throw ValidationError("type II state needs player locations");
    for (double v : *f.locations) row[c++] = static_cast<float>(v);
  } else if (type == StateType::III) {
    if (!f.pressure) throw ValidationError("type III state needs pressure counts");
    row[c++] = static_cast<float>(f.pressure->z1);
    row[c++] = static_cast<float>(f.pressure->z2);
    row[c++] = static_cast<float>(f.pressure->z3);
  }
  row[c + index(action)] = 1.0f;
}

/// The last ten non-ending actions in time order, zero padded at the tail; the
/// ending action is the label.
inline PossessionState build_state(const Possession& p, StateType type,
                                   const std::vector<ActionFeatures>& features) {
  if (features.size() != p.actions.size())
    throw ValidationError("build_state: one feature record per action required");
  PossessionState s;
  s.type = type;
  s.width = state_width(type);
  s.tensor.assign(kMaxActions * s.width, 0.0f);
  s.label = p.ending;
  const std::size_t n = p.actions.size();
  const std::size_t first = n > kMaxActions ? n - kMaxActions : 0;
  s.true_length = n - first;
  for (std::size_t k = first; k < n; ++k)
    write_state_row(&s.tensor[(k - first) * s.width], type, features[k], p.actions[k].action);
  return s;
}

inline PossessionState build_state(const Possession& p, StateType type, TrackingIndex& tracking) {
  std::vector<ActionFeatures> features;
  features.reserve(p.actions.size());
  for (const auto& e : p.actions) features.push_back(action_features(e, type, tracking));
  return build_state(p, type, features);
}

/// Stacked [m, 10, width] tensor with lengths and labels.
struct StateTensor {
  StateType type = StateType::III;
  std::size_t width = 0;
  std::vector<float> data;
  std::vector<std::size_t> lengths;
  std::vector<EndingAction> labels;

  std::size_t size() const { return lengths.size(); }
  const float* sample(std::size_t i) const { return data.data() + i * kMaxActions * width; }
  float at(std::size_t i, std::size_t row, std::size_t col) const {
    return data[(i * kMaxActions + row) * width + col];
  }
  std::array<std::size_t, 3> shape() const { return {size(), kMaxActions, width}; }

  void append(const PossessionState& s) {
    if (size() == 0 && data.empty()) {
      type = s.type;
      width = s.width;
    }
    if (s.width != width) throw ValidationError("state width mismatch while stacking");
    data.insert(data.end(), s.tensor.begin(), s.tensor.end());
    lengths.push_back(s.true_length);
    labels.push_back(s.label);
  }

  PossessionState state(std::size_t i) const {
    PossessionState s;
    s.type = type;
    s.width = width;
    s.tensor.assign(sample(i), sample(i) + kMaxActions * width);
    s.true_length = lengths[i];
    s.label = labels[i];
    return s;
  }
};

inline StateTensor stack_states(const std::vector<PossessionState>& states, StateType type) {
  StateTensor t;
  t.type = type;
  t.width = state_width(type);
  t.data.reserve(states.size() * kMaxActions * t.width);
  for (const auto& s : states) t.append(s);
  return t;
}

/// Zero padding below true_length and exactly one action bit per populated row.
inline bool check_state_invariants(const StateTensor& t, std::string* why = nullptr) {
  const std::size_t onehot = t.width - kActionCount;
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t r = 0; r < kMaxActions; ++r) {
      std::size_t ones = 0;
      for (std::size_t c = onehot; c < t.width; ++c) {
        const float v = t.at(i, r, c);
        if (v != 0.0f && v != 1.0f) {
          if (why) *why = "non-binary action entry in sample " + std::to_string(i);
          return false;
        }
        ones += v == 1.0f;
      }
      if (r < t.lengths[i]) {
        if (ones != 1) {
          if (why) *why = "row without exactly one action bit in sample " + std::to_string(i);
          return false;
        }
      } else {
        for (std::size_t c = 0; c < t.width; ++c)
          if (t.at(i, r, c) != 0.0f) {
            if (why) *why = "non-zero padding in sample " + std::to_string(i);
            return false;
          }
      }
    }
  }
  return true;
}

inline void write_tensor(const std::string& tensor_path, const std::string& label_path, const StateTensor& t) {
  std::ofstream out(tensor_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + tensor_path);
  const std::string header = std::to_string(t.size()) + "," + std::to_string(kMaxActions) + "," +
                             std::to_string(t.width) + "\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::vector<unsigned char> bytes(t.data.size() * 4);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, &t.data[i], 4);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>((u >> (8 * b)) & 0xffu);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  std::string labels;
  for (auto l : t.labels) labels += std::to_string(index(l)) + "\n";
  text::write_file(label_path, labels);
}

/// Reads a tensor dump. True lengths are recovered from the populated action bits.
inline StateTensor read_tensor(const std::string& tensor_path, const std::string& label_path) {
  const std::string raw = text::read_file(tensor_path);
  const auto nl = raw.find('\n');
  if (nl == std::string::npos) throw ParseError("tensor header missing", 1);
  const auto dims = text::split(std::string_view(raw).substr(0, nl), ',');
  if (dims.size() != 3) throw ParseError("tensor header must be m,10,width", 1);
  auto m = text::parse_int(dims[0]), steps = text::parse_int(dims[1]), w = text::parse_int(dims[2]);
  if (!m || !steps || !w || *steps != static_cast<long long>(kMaxActions))
    throw ParseError("bad tensor header", 1);
  StateTensor t;
  t.width = static_cast<std::size_t>(*w);
  if (t.width == state_width(StateType::I)) t.type = StateType::I;
  else if (t.width == state_width(StateType::II)) t.type = StateType::II;
  else if (t.width == state_width(StateType::III)) t.type = StateType::III;
  else throw ParseError("unknown state width", 1);
  const std::size_t count = static_cast<std::size_t>(*m) * kMaxActions * t.width;
  if (raw.size() - nl - 1 != count * 4) throw ParseError("tensor payload size mismatch", 1);
  t.data.resize(count);
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data() + nl + 1);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(p[i * 4 + b]) << (8 * b);
    std::memcpy(&t.data[i], &u, 4);
  }
  const std::string label_text = text::read_file(label_path);
  const auto rows = text::lines(label_text);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto v = text::parse_int(rows[i]);
    if (!v || *v < 0 || *v > 3) throw ParseError("bad label", i + 1);
    t.labels.push_back(static_cast<EndingAction>(*v));
  }
  if (t.labels.size() != static_cast<std::size_t>(*m)) throw ParseError("label count mismatch", rows.size());
  const std::size_t onehot = t.width - kActionCount;
  t.lengths.resize(t.labels.size());
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    std::size_t n = 0;
    for (std::size_t r = 0; r < kMaxActions; ++r)
      for (std::size_t c = onehot; c < t.width; ++c)
        if (t.at(i, r, c) != 0.0f) n = r + 1;
    t.lengths[i] = n;
  }
  return t;
}

}  // namespace prl
