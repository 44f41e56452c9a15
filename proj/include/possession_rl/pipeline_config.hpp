#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

#include "possession_rl/outcome_classifier.hpp"
#include "possession_rl/policy.hpp"
#include "possession_rl/random.hpp"
#include "possession_rl/state_builder.hpp"
#include "possession_rl/synthetic.hpp"
#include "possession_rl/xg.hpp"

namespace prl {

/// Everything a pipeline run needs. Component seeds are derived from `seed`.
struct PipelineConfig {
  std::string out_dir = "artifacts";
  bool synthetic = true;
  std::string events_path;  // used when synthetic is false
  std::string frames_path;  // optional for type I
  StateType state_type = StateType::III;
  std::uint64_t seed = 1;

  std::size_t n_matches = 104;
  std::size_t possessions_per_half = 45;

  std::size_t xg_folds = 5;
  double xg_lambda = 1.0;
  TrainConfig classifier;
  PGConfig policy;
  std::size_t top_k = 20;

  SyntheticConfig synthetic_config() const {
    SyntheticConfig s;
    s.n_matches = n_matches;
    s.possessions_per_half = possessions_per_half;
    s.seed = seed;
    return s;
  }
  TrainConfig classifier_config() const {
    TrainConfig c = classifier;
    c.seed = derive_seed(seed, 1);
    return c;
  }
  PGConfig policy_config() const {
    PGConfig p = policy;
    p.seed = derive_seed(seed, 2);
    return p;
  }
  std::uint64_t xg_seed() const { return derive_seed(seed, 3); }
  XgFitOptions xg_options() const {
    XgFitOptions o;
    o.lambda = xg_lambda;
    return o;
  }
  bool has_frames() const { return synthetic || !frames_path.empty(); }

  void validate() const {
    if (out_dir.empty()) throw ValidationError("config: out_dir must not be empty");
    if (synthetic) {
      synthetic_config().validate();
    } else {
      if (events_path.empty()) throw ValidationError("config: input.events is required without synthetic data");
      if (!std::filesystem::is_regular_file(events_path))
        throw ValidationError("config: events file not found: " + events_path);
      if (!frames_path.empty() && !std::filesystem::is_regular_file(frames_path))
        throw ValidationError("config: frames file not found: " + frames_path);
    }
    if (state_type != StateType::I && !has_frames())
      throw ValidationError("config: state types II and III need tracking frames");
    if (xg_folds < 2) throw ValidationError("config: xg.folds must be at least 2");
    if (!(xg_lambda >= 0.0)) throw ValidationError("config: xg.lambda must be non-negative");
    classifier_config().validate();
    policy_config().validate();
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError("config: " + where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ValidationError("config: unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("config: bad value for '") + key + "'");
  }
}

}  // namespace detail

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read_key;
  PipelineConfig c;
  check_keys(j, "", {"out_dir", "state_type", "seed", "input", "synthetic", "xg", "classifier", "policy", "report"});
  read_key(j, "out_dir", c.out_dir);
  read_key(j, "seed", c.seed);
  if (j.contains("state_type")) {
    const auto s = j.at("state_type");
    const auto t = s.is_string() ? state_type_from_string(s.get<std::string>()) : std::nullopt;
    if (!t) throw ValidationError("config: state_type must be I, II or III");
    c.state_type = *t;
  }
  if (j.contains("input")) {
    const auto& in = j.at("input");
    check_keys(in, "input", {"synthetic", "events", "frames"});
    read_key(in, "synthetic", c.synthetic);
    read_key(in, "events", c.events_path);
    read_key(in, "frames", c.frames_path);
  }
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    check_keys(s, "synthetic", {"n_matches", "possessions_per_half"});
    read_key(s, "n_matches", c.n_matches);
    read_key(s, "possessions_per_half", c.possessions_per_half);
  }
  if (j.contains("xg")) {
    const auto& x = j.at("xg");
    check_keys(x, "xg", {"folds", "lambda"});
    read_key(x, "folds", c.xg_folds);
    read_key(x, "lambda", c.xg_lambda);
  }
  if (j.contains("classifier")) {
    const auto& x = j.at("classifier");
    check_keys(x, "classifier", {"epochs", "batch_size", "learning_rate", "validation_fraction"});
    read_key(x, "epochs", c.classifier.epochs);
    read_key(x, "batch_size", c.classifier.batch_size);
    read_key(x, "learning_rate", c.classifier.learning_rate);
    read_key(x, "validation_fraction", c.classifier.validation_fraction);
  }
  if (j.contains("policy")) {
    const auto& x = j.at("policy");
    check_keys(x, "policy", {"learning_rate", "epochs", "batch_episodes", "w_min", "w_max", "clip", "gamma",
                             "standardize"});
    read_key(x, "learning_rate", c.policy.learning_rate);
    read_key(x, "epochs", c.policy.epochs);
    read_key(x, "batch_episodes", c.policy.batch_episodes);
    read_key(x, "w_min", c.policy.w_min);
    read_key(x, "w_max", c.policy.w_max);
    read_key(x, "clip", c.policy.clip);
    read_key(x, "gamma", c.policy.gamma);
    read_key(x, "standardize", c.policy.standardize);
  }
  if (j.contains("report")) {
    const auto& x = j.at("report");
    check_keys(x, "report", {"top_k"});
    read_key(x, "top_k", c.top_k);
  }
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

/// The settings that shape the artifacts. The output directory is left out so
/// that runs in different directories can be compared.
inline nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["state_type"] = std::string(to_string(c.state_type));
  j["seed"] = c.seed;
  j["input"] = {{"synthetic", c.synthetic}, {"events", c.events_path}, {"frames", c.frames_path}};
  j["synthetic"] = {{"n_matches", c.n_matches}, {"possessions_per_half", c.possessions_per_half}};
  j["xg"] = {{"folds", c.xg_folds}, {"lambda", c.xg_lambda}};
  j["classifier"] = {{"epochs", c.classifier.epochs},
                     {"batch_size", c.classifier.batch_size},
                     {"learning_rate", c.classifier.learning_rate},
                     {"validation_fraction", c.classifier.validation_fraction}};
  j["policy"] = {{"learning_rate", c.policy.learning_rate}, {"epochs", c.policy.epochs},
                 {"batch_episodes", c.policy.batch_episodes}, {"w_min", c.policy.w_min},
                 {"w_max", c.policy.w_max}, {"clip", c.policy.clip},
                 {"gamma", c.policy.gamma}, {"standardize", c.policy.standardize}};
  j["report"] = {{"top_k", c.top_k}};
  return j;
}

}  // namespace prl
