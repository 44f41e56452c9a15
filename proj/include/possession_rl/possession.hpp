#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "possession_rl/match_data.hpp"

namespace prl {

struct Possession {
  std::string match_id;
  int half = 1;
  std::size_t possession_id = 0;  // 1-based ordinal within the match
  Team team = Team::Home;
  std::vector<Event> actions;        // owner actions, ending excluded
  std::vector<Event> interruptions;  // brief opponent touches absorbed by the 3-event rule
  EndingAction ending = EndingAction::Error;
  Event ending_event;

  // Positions in the match's sorted event list, kept for dump/reload.
  std::vector<std::size_t> action_indices;
  std::vector<std::size_t> interruption_indices;
  std::size_t ending_index = 0;

  std::size_t length() const { return actions.size() + 1; }
};

enum class EpisodeTerminal { Loss, Shot };

struct Episode {
  std::string match_id;
  Team team = Team::Home;
  std::vector<Possession> possessions;
  EpisodeTerminal terminal = EpisodeTerminal::Loss;

  std::size_t horizon() const { return possessions.size(); }
};

/// Ending class of a possession closed by its owner's own terminator action.
inline EndingAction ending_for_owner_action(Action a) {
  switch (a) {
    case Action::Shot: return EndingAction::Shot;
    case Action::BallOut: return EndingAction::Out;
    case Action::Foul: return EndingAction::Foul;
    default: return EndingAction::Error;
  }
}

namespace detail {

class Segmenter {
 public:
  explicit Segmenter(const std::vector<Event>& events) : events_(events) {}

  std::vector<Possession> run() {
    for (std::size_t i = 0; i < events_.size(); ++i) {
      const Event& e = events_[i];
      if (i > 0 && (e.half != events_[i - 1].half || e.match_id != events_[i - 1].match_id)) {
        finish_period();
      }
      feed(i);
    }
    finish_period();
    return std::move(out_);
  }

 private:
  void feed(std::size_t i) {
    const Event& e = events_[i];
    if (!owner_) start(e.team, i);
    if (e.team == *owner_) {
      absorb_pending();
      fresh_ = false;
      if (is_terminator(e.action)) {
        close(ending_for_owner_action(e.action), i);
        start(*owner_, i);
      } else {
        cur_.action_indices.push_back(i);
      }
      return;
    }
    pending_.push_back(i);
    if (!(is_terminator(e.action) || pending_.size() >= 3)) return;
    if (!fresh_) {
      // Transfer: the owner's last action becomes the losing ending.
      const std::size_t last = cur_.action_indices.back();
      cur_.action_indices.pop_back();
      close(EndingAction::Error, last);
    }
    hand_over(e.team, i);
  }

  // The pending opponent run becomes the new owner's possession.
  void hand_over(Team new_owner, std::size_t at) {
    auto run = std::move(pending_);
    pending_.clear();
    start(new_owner, at);
    for (std::size_t idx : run) {
      fresh_ = false;
      if (is_terminator(events_[idx].action)) {
        close(ending_for_owner_action(events_[idx].action), idx);
        start(new_owner, idx);
      } else {
        cur_.action_indices.push_back(idx);
      }
    }
  }

  void absorb_pending() {
    for (std::size_t idx : pending_) cur_.interruption_indices.push_back(idx);
    pending_.clear();
  }

  void start(Team owner, std::size_t at) {
    owner_ = owner;
    fresh_ = true;
    cur_ = Possession{};
    cur_.team = owner;
    cur_.match_id = events_[at].match_id;
    cur_.half = events_[at].half;
  }

  void close(EndingAction ending, std::size_t ending_index) {
    cur_.ending = ending;
    cur_.ending_index = ending_index;
    const std::string& match = events_[ending_index].match_id;
    cur_.possession_id = ++ordinal_[match];
    materialize(cur_);
    out_.push_back(std::move(cur_));
    cur_ = Possession{};
  }

  void finish_period() {
    if (!owner_) return;
    if (!fresh_) {
      absorb_pending();
      const std::size_t last = cur_.action_indices.back();
      cur_.action_indices.pop_back();
      close(EndingAction::Error, last);
    } else if (!pending_.empty()) {
      // Unresolved opponent run at the period end: it is their (cut) possession.
      const Team opp = events_[pending_.front()].team;
      auto run = std::move(pending_);
      pending_.clear();
      start(opp, run.front());
      for (std::size_t k = 0; k + 1 < run.size(); ++k) cur_.action_indices.push_back(run[k]);
      close(EndingAction::Error, run.back());
    }
    owner_.reset();
    fresh_ = true;
    pending_.clear();
  }

  void materialize(Possession& p) const {
    p.actions.clear();
    p.interruptions.clear();
    for (auto i : p.action_indices) p.actions.push_back(events_[i]);
    for (auto i : p.interruption_indices) p.interruptions.push_back(events_[i]);
    p.ending_event = events_[p.ending_index];
  }

  const std::vector<Event>& events_;
  std::vector<Possession> out_;
  Possession cur_;
  std::optional<Team> owner_;
  bool fresh_ = true;
  std::vector<std::size_t> pending_;
  std::map<std::string, std::size_t> ordinal_;
};

}  // namespace detail

/// Splits a time-ordered event stream into possessions. Ownership passes to the
/// other team only after it holds the ball for three consecutive events or closes
/// the run with a terminating action; shorter opponent runs are kept as
/// interruptions of the surrounding possession. Indexes in the result refer to
/// positions in `events`.
inline std::vector<Possession> segment_possessions(const std::vector<Event>& events) {
  if (events.empty()) return {};
  return detail::Segmenter(events).run();
}

/// Chains consecutive possessions of `team` into episodes. An episode closes on a
/// shot, or when the next possession belongs to the opponent or a later period.
inline std::vector<Episode> build_episodes(const std::vector<Possession>& possessions, Team team) {
  std::vector<Episode> episodes;
  std::optional<Episode> cur;
  for (std::size_t i = 0; i < possessions.size(); ++i) {
    const Possession& p = possessions[i];
    if (p.team != team) continue;
    if (!cur) {
      cur.emplace();
      cur->match_id = p.match_id;
      cur->team = team;
    }
    cur->possessions.push_back(p);
    bool close = false;
    if (p.ending == EndingAction::Shot) {
      cur->terminal = EpisodeTerminal::Shot;
      close = true;
    } else {
      const bool has_next = i + 1 < possessions.size();
      const bool continues = has_next && possessions[i + 1].team == team &&
                             possessions[i + 1].match_id == p.match_id &&
                             possessions[i + 1].half == p.half;
      if (!continues) {
        cur->terminal = EpisodeTerminal::Loss;
        close = true;
      }
    }
    if (close) {
      episodes.push_back(std::move(*cur));
      cur.reset();
    }
  }
  return episodes;
}

inline constexpr std::string_view kPossessionHeader =
    "match_id,possession_id,team,half,ending,ending_index,action_indices,interruption_indices";

/// One possession per line; indices refer to the match-local sorted event list.
inline std::string serialize_possessions(const std::vector<Possession>& possessions,
                                         const std::map<std::string, std::size_t>& match_offset) {
  auto join = [](const std::vector<std::size_t>& v, std::size_t offset) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (k) s += ';';
      s += std::to_string(v[k] - offset);
    }
    return s;
  };
  std::string out(kPossessionHeader);
  out += '\n';
  for (const auto& p : possessions) {
    const std::size_t off = match_offset.at(p.match_id);
    out += p.match_id + ',' + std::to_string(p.possession_id) + ',' + std::string(to_string(p.team)) +
           ',' + std::to_string(p.half) + ',' + std::string(to_string(p.ending)) + ',' +
           std::to_string(p.ending_index - off) + ',' + join(p.action_indices, off) + ',' +
           join(p.interruption_indices, off) + '\n';
  }
  return out;
}

/// Start offset of each match in a (match, half, time)-sorted event list.
inline std::map<std::string, std::size_t> match_offsets(const std::vector<Event>& events) {
  std::map<std::string, std::size_t> off;
  for (std::size_t i = 0; i < events.size(); ++i) off.try_emplace(events[i].match_id, i);
  return off;
}

inline std::vector<Possession> parse_possessions(std::string_view content,
                                                 const std::vector<Event>& events) {
  const auto offsets = match_offsets(events);
  std::vector<Possession> out;
  const auto rows = text::lines(content);
  auto parse_list = [&](std::string_view s, std::size_t off, std::size_t line) {
    std::vector<std::size_t> v;
    if (text::trim(s).empty()) return v;
    for (auto part : text::split(s, ';')) {
      auto n = text::parse_int(part);
      if (!n || *n < 0) throw ParseError("bad index list", line);
      const std::size_t idx = off + static_cast<std::size_t>(*n);
      if (idx >= events.size()) throw ParseError("event index out of range", line);
      v.push_back(idx);
    }
    return v;
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t line = i + 1;
    const auto row = text::trim(rows[i]);
    if (row.empty() || (i == 0 && row.starts_with("match_id"))) continue;
    const auto f = text::split(row, ',');
    if (f.size() != 8) throw ParseError("expected 8 fields", line);
    Possession p;
    p.match_id = std::string(f[0]);
    auto it = offsets.find(p.match_id);
    if (it == offsets.end()) throw ParseError("unknown match " + p.match_id, line);
    const std::size_t off = it->second;
    auto pid = text::parse_int(f[1]);
    auto team = team_from_string(f[2]);
    auto half = text::parse_int(f[3]);
    auto ending = ending_from_string(f[4]);
    auto eidx = text::parse_int(f[5]);
    if (!pid || !team || !half || !ending || !eidx) throw ParseError("bad possession row", line);
    p.possession_id = static_cast<std::size_t>(*pid);
    p.team = *team;
    p.half = static_cast<int>(*half);
    p.ending = *ending;
    p.ending_index = off + static_cast<std::size_t>(*eidx);
    if (p.ending_index >= events.size()) throw ParseError("event index out of range", line);
    p.action_indices = parse_list(f[6], off, line);
    p.interruption_indices = parse_list(f[7], off, line);
    for (auto k : p.action_indices) p.actions.push_back(events[k]);
    for (auto k : p.interruption_indices) p.interruptions.push_back(events[k]);
    p.ending_event = events[p.ending_index];
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace prl
