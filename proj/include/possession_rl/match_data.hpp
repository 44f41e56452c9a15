#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "possession_rl/pitch.hpp"
#include "possession_rl/text.hpp"
#include "possession_rl/vocabulary.hpp"

namespace prl {

struct Event {
  std::string match_id;
  Team team = Team::Home;
  std::string player_id;
  Action action = Action::Other;
  double x_start = 0.0, y_start = 0.0;
  double x_end = 0.0, y_end = 0.0;
  ActionResult result = ActionResult::Successful;
  BodyPart body = BodyPart::Foot;
  double time_s = 0.0;
  int half = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

inline constexpr std::size_t kPlayersPerFrame = 22;
inline constexpr std::size_t kPlayersPerTeam = 11;

struct PlayerSlot {
  std::string player_id;
  Team team = Team::Home;
  double x = 0.0, y = 0.0;

  friend bool operator==(const PlayerSlot&, const PlayerSlot&) = default;
};

struct Frame {
  std::string match_id;
  double time_s = 0.0;
  std::array<PlayerSlot, kPlayersPerFrame> players;
  std::optional<std::string> ball_holder;

  friend bool operator==(const Frame&, const Frame&) = default;

  const PlayerSlot* find(std::string_view id) const {
    for (const auto& p : players)
      if (p.player_id == id) return &p;
    return nullptr;
  }
};

struct PlayerState {
  double x = 0.0, y = 0.0;
  double vx = 0.0, vy = 0.0;
};

inline constexpr double kMaxSpeed = 12.0;

inline constexpr std::string_view kEventHeader =
    "match_id,team,player_id,action_name,x_start,y_start,x_end,y_end,result,body_id,time_s,half";

namespace detail {

inline void check_coordinate(double v, double hi, std::size_t line, const char* name) {
  if (!(v >= 0.0 && v <= hi))
    throw ValidationError("line " + std::to_string(line) + ": " + name + "=" +
                          text::format_double(v) + " outside pitch bounds");
}

inline double field_double(std::string_view s, std::size_t line, const char* name) {
  auto v = text::parse_double(s);
  if (!v || !std::isfinite(*v))
    throw ParseError(std::string("bad numeric field ") + name + " '" + std::string(s) + "'", line);
  return *v;
}

}  // namespace detail

/// Parses event-log content. The first line is a header; events come back sorted
/// by (match_id, half, time_s) with file order kept among ties.
inline std::vector<Event> parse_events(std::string_view content) {
  std::vector<Event> events;
  const auto rows = text::lines(content);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t line = i + 1;
    const auto row = text::trim(rows[i]);
    if (row.empty()) continue;
    if (i == 0 && row.starts_with("match_id")) continue;
    const auto f = text::split(row, ',');
    if (f.size() != 12)
      throw ParseError("expected 12 fields, got " + std::to_string(f.size()), line);
    Event e;
    e.match_id = std::string(text::trim(f[0]));
    if (e.match_id.empty()) throw ParseError("empty match_id", line);
    auto team = team_from_string(text::trim(f[1]));
    if (!team) throw ParseError("bad team '" + std::string(f[1]) + "'", line);
    e.team = *team;
    e.player_id = std::string(text::trim(f[2]));
    e.action = action_from_string(text::trim(f[3]));
    e.x_start = detail::field_double(f[4], line, "x_start");
    e.y_start = detail::field_double(f[5], line, "y_start");
    e.x_end = detail::field_double(f[6], line, "x_end");
    e.y_end = detail::field_double(f[7], line, "y_end");
    auto result = result_from_string(text::trim(f[8]));
    if (!result) throw ParseError("bad result '" + std::string(f[8]) + "'", line);
    e.result = *result;
    auto body = body_from_string(text::trim(f[9]));
    if (!body) throw ParseError("bad body_id '" + std::string(f[9]) + "'", line);
    e.body = *body;
    e.time_s = detail::field_double(f[10], line, "time_s");
    auto half = text::parse_int(f[11]);
    if (!half || (*half != 1 && *half != 2)) throw ParseError("bad half", line);
    e.half = static_cast<int>(*half);

    detail::check_coordinate(e.x_start, pitch::kLength, line, "x_start");
    detail::check_coordinate(e.y_start, pitch::kWidth, line, "y_start");
    detail::check_coordinate(e.x_end, pitch::kLength, line, "x_end");
    detail::check_coordinate(e.y_end, pitch::kWidth, line, "y_end");
    if (e.time_s < 0.0)
      throw ValidationError("line " + std::to_string(line) + ": negative time_s");
    events.push_back(std::move(e));
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.match_id != b.match_id) return a.match_id < b.match_id;
    if (a.half != b.half) return a.half < b.half;
    return a.time_s < b.time_s;
  });
  return events;
}

inline std::vector<Event> parse_event_log(const std::string& path) {
  return parse_events(text::read_file(path));
}

inline std::string serialize_events(const std::vector<Event>& events) {
  std::string out(kEventHeader);
  out += '\n';
  for (const auto& e : events) {
    out += e.match_id;
    out += ',';
    out += to_string(e.team);
    out += ',';
    out += e.player_id;
    out += ',';
    out += to_string(e.action);
    for (double v : {e.x_start, e.y_start, e.x_end, e.y_end}) {
      out += ',';
      out += text::format_double(v);
    }
    out += ',';
    out += to_string(e.result);
    out += ',';
    out += to_string(e.body);
    out += ',';
    out += text::format_double(e.time_s);
    out += ',';
    out += std::to_string(e.half);
    out += '\n';
  }
  return out;
}

/// Frame lines: `match_id,time_s,holder_id` followed by 22 `player_id:team:x:y` fields.
inline std::vector<Frame> parse_frames(std::string_view content) {
  std::vector<Frame> frames;
  const auto rows = text::lines(content);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t line = i + 1;
    const auto row = text::trim(rows[i]);
    if (row.empty()) continue;
    const auto f = text::split(row, ',');
    if (f.size() != 3 + kPlayersPerFrame)
      throw ParseError("expected 25 fields, got " + std::to_string(f.size()), line);
    Frame fr;
    fr.match_id = std::string(text::trim(f[0]));
    fr.time_s = detail::field_double(f[1], line, "time_s");
    const auto holder = text::trim(f[2]);
    if (!holder.empty()) fr.ball_holder = std::string(holder);
    for (std::size_t p = 0; p < kPlayersPerFrame; ++p) {
      const auto parts = text::split(f[3 + p], ':');
      if (parts.size() != 4) throw ParseError("bad player entry '" + std::string(f[3 + p]) + "'", line);
      auto& slot = fr.players[p];
      slot.player_id = std::string(text::trim(parts[0]));
      auto team = team_from_string(text::trim(parts[1]));
      if (!team) throw ParseError("bad player team", line);
      slot.team = *team;
      slot.x = detail::field_double(parts[2], line, "x");
      slot.y = detail::field_double(parts[3], line, "y");
      detail::check_coordinate(slot.x, pitch::kLength, line, "x");
      detail::check_coordinate(slot.y, pitch::kWidth, line, "y");
    }
    frames.push_back(std::move(fr));
  }
  return frames;
}

inline std::vector<Frame> parse_frame_log(const std::string& path) {
  return parse_frames(text::read_file(path));
}

inline std::string serialize_frames(const std::vector<Frame>& frames) {
  std::string out;
  for (const auto& fr : frames) {
    out += fr.match_id;
    out += ',';
    out += text::format_double(fr.time_s);
    out += ',';
    if (fr.ball_holder) out += *fr.ball_holder;
    for (const auto& p : fr.players) {
      out += ',';
      out += p.player_id;
      out += ':';
      out += to_string(p.team);
      out += ':';
      out += text::format_double(p.x);
      out += ':';
      out += text::format_double(p.y);
    }
    out += '\n';
  }
  return out;
}

inline PlayerState clamp_speed(PlayerState s, double max_speed = kMaxSpeed) {
  const double speed = std::hypot(s.vx, s.vy);
  if (speed > max_speed) {
    s.vx *= max_speed / speed;
    s.vy *= max_speed / speed;
  }
  return s;
}

using FrameStates = std::array<PlayerState, kPlayersPerFrame>;

/// Backward finite-difference velocities, one state per frame slot. Frames of a
/// match must be time-sorted; each match needs at least two frames. The first
/// frame of a match copies the second frame's velocities.
inline std::vector<FrameStates> compute_velocities(const std::vector<Frame>& frames) {
  std::vector<FrameStates> out(frames.size());
  std::map<std::string, std::vector<std::size_t>> by_match;
  for (std::size_t i = 0; i < frames.size(); ++i) by_match[frames[i].match_id].push_back(i);

  for (const auto& [match, idx] : by_match) {
    if (idx.size() < 2)
      throw ValidationError("match " + match + ": velocities need at least two frames");
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Frame& cur = frames[idx[k]];
      for (std::size_t p = 0; p < kPlayersPerFrame; ++p) {
        out[idx[k]][p].x = cur.players[p].x;
        out[idx[k]][p].y = cur.players[p].y;
      }
      if (k == 0) continue;
      const Frame& prev = frames[idx[k - 1]];
      const double dt = cur.time_s - prev.time_s;
      if (!(dt > 0.0))
        throw ValidationError("match " + match + ": frames not strictly increasing in time");
      for (std::size_t p = 0; p < kPlayersPerFrame; ++p) {
        const auto& slot = cur.players[p];
        const PlayerSlot* before = prev.players[p].player_id == slot.player_id
                                       ? &prev.players[p]
                                       : prev.find(slot.player_id);
        PlayerState& s = out[idx[k]][p];
        if (before) {
          s.vx = (slot.x - before->x) / dt;
          s.vy = (slot.y - before->y) / dt;
          s = clamp_speed(s);
        }
      }
    }
    const Frame& first = frames[idx[0]];
    const Frame& second = frames[idx[1]];
    for (std::size_t p = 0; p < kPlayersPerFrame; ++p) {
      std::size_t q = p;
      if (second.players[q].player_id != first.players[p].player_id) {
        q = kPlayersPerFrame;
        for (std::size_t j = 0; j < kPlayersPerFrame; ++j)
          if (second.players[j].player_id == first.players[p].player_id) q = j;
      }
      if (q < kPlayersPerFrame) {
        out[idx[0]][p].vx = out[idx[1]][q].vx;
        out[idx[0]][p].vy = out[idx[1]][q].vy;
      }
    }
  }
  return out;
}

}  // namespace prl
