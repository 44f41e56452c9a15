#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace prl {

struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Team : int { Home = 0, Away = 1 };

inline Team other(Team t) { return t == Team::Home ? Team::Away : Team::Home; }

inline std::string_view to_string(Team t) { return t == Team::Home ? "home" : "away"; }

inline std::optional<Team> team_from_string(std::string_view s) {
  if (s == "home") return Team::Home;
  if (s == "away") return Team::Away;
  return std::nullopt;
}

// Closed on-ball action vocabulary. Order fixes the one-hot layout of state rows.
enum class Action : int {
  Pass = 0,
  Cross,
  Dribble,
  Shot,
  Clearance,
  BallOut,
  Foul,
  Tackle,
  Interception,
  BadBallControl,
  Other,
};

inline constexpr std::size_t kActionCount = 11;

inline constexpr std::array<std::string_view, kActionCount> kActionNames = {
    "pass",  "cross", "dribble",      "shot",             "clearance", "ball_out",
    "foul",  "tackle", "interception", "bad_ball_control", "other"};

inline std::string_view to_string(Action a) { return kActionNames[static_cast<std::size_t>(a)]; }

/// Unknown labels fall into Action::Other.
inline Action action_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kActionCount; ++i)
    if (kActionNames[i] == s) return static_cast<Action>(i);
  return Action::Other;
}

inline std::optional<Action> action_from_string_strict(std::string_view s) {
  for (std::size_t i = 0; i < kActionCount; ++i)
    if (kActionNames[i] == s) return static_cast<Action>(i);
  return std::nullopt;
}

// Actions that close the current possession when performed by its owner.
inline bool is_terminator(Action a) {
  switch (a) {
    case Action::Shot:
    case Action::BallOut:
    case Action::Foul:
    case Action::BadBallControl:
    case Action::Clearance:
      return true;
    default:
      return false;
  }
}

enum class ActionResult : int { Unsuccessful = 0, Successful = 1 };

enum class BodyPart : int { Head = 0, Body = 1, Foot = 2 };

inline std::string_view to_string(ActionResult r) {
  return r == ActionResult::Successful ? "successful" : "unsuccessful";
}

inline std::optional<ActionResult> result_from_string(std::string_view s) {
  if (s == "successful") return ActionResult::Successful;
  if (s == "unsuccessful") return ActionResult::Unsuccessful;
  return std::nullopt;
}

inline std::string_view to_string(BodyPart b) {
  switch (b) {
    case BodyPart::Head: return "head";
    case BodyPart::Body: return "body";
    case BodyPart::Foot: return "foot";
  }
  return "foot";
}

inline std::optional<BodyPart> body_from_string(std::string_view s) {
  if (s == "head") return BodyPart::Head;
  if (s == "body") return BodyPart::Body;
  if (s == "foot") return BodyPart::Foot;
  return std::nullopt;
}

// Possession-ending classes, in the fixed output order of every 4-way distribution.
enum class EndingAction : int { Shot = 0, Out = 1, Foul = 2, Error = 3 };

inline constexpr std::size_t kEndingCount = 4;

inline constexpr std::array<std::string_view, kEndingCount> kEndingNames = {"shot", "out", "foul",
                                                                            "error"};

inline std::string_view to_string(EndingAction e) {
  return kEndingNames[static_cast<std::size_t>(e)];
}

inline std::optional<EndingAction> ending_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kEndingCount; ++i)
    if (kEndingNames[i] == s) return static_cast<EndingAction>(i);
  return std::nullopt;
}

inline std::size_t index(EndingAction e) { return static_cast<std::size_t>(e); }
inline std::size_t index(Action a) { return static_cast<std::size_t>(a); }

using Distribution4 = std::array<double, kEndingCount>;

}  // namespace prl
