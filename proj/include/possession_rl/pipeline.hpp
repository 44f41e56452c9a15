#pragma once

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "possession_rl/pipeline_config.hpp"
#include "possession_rl/possession.hpp"
#include "possession_rl/pressure.hpp"
#include "possession_rl/scenario.hpp"

namespace prl {

enum class Stage : int {
  Generate = 0,
  Ingest,
  Segment,
  Pressure,
  States,
  TrainXg,
  TrainOutcome,
  TrainPolicy,
  Evaluate,
  Report,
};

inline constexpr std::size_t kStageCount = 10;
inline constexpr std::array<std::string_view, kStageCount> kStageNames = {
    "generate", "ingest", "segment", "pressure", "states", "train-xg", "train-outcome", "train-policy", "evaluate", "report"};

inline std::string_view to_string(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

inline std::optional<Stage> stage_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kStageCount; ++i)
    if (kStageNames[i] == s) return static_cast<Stage>(i);
  return std::nullopt;
}

/// Exit status of a failed stage.
inline int stage_exit_code(Stage s) { return 10 + static_cast<int>(s); }

struct StageError : std::runtime_error {
  StageError(Stage s, const std::string& what)
      : std::runtime_error(std::string(to_string(s)) + ": " + what), stage(s) {}
  Stage stage;
};

namespace files {
inline constexpr const char* kGeneratedEvents = "generated/events.csv";
inline constexpr const char* kGeneratedFrames = "generated/frames.csv";
inline constexpr const char* kGroundTruth = "generated/ground_truth.json";
inline constexpr const char* kEvents = "events.csv";
inline constexpr const char* kFrameIndex = "frame_index.csv";
inline constexpr const char* kPossessions = "possessions.csv";
inline constexpr const char* kPressures = "pressures.csv";
inline constexpr const char* kTensor = "states.bin";
inline constexpr const char* kLabels = "labels.txt";
inline constexpr const char* kXgModel = "xg_model.txt";
inline constexpr const char* kXgEval = "xg_eval.txt";
inline constexpr const char* kOutcomeModel = "outcome_model.ckpt";
inline constexpr const char* kLossCurve = "loss_curve.csv";
inline constexpr const char* kTransitions = "transitions.csv";
inline constexpr const char* kPossessionValues = "possession_values.csv";
inline constexpr const char* kPolicyModel = "policy_model.ckpt";
inline constexpr const char* kPolicyTrace = "policy_trace.csv";
inline constexpr const char* kOpeReport = "ope_report.csv";
inline constexpr const char* kOpeSummary = "ope_summary.txt";
inline constexpr const char* kKde = "kde.csv";
inline constexpr const char* kMatchValues = "match_values.csv";
inline constexpr const char* kScenarios = "scenarios.csv";
inline constexpr const char* kManifest = "manifest.json";
}  // namespace files

/// Files each stage writes, in manifest order.
inline const std::vector<const char*>& stage_outputs(Stage s) {
  static const std::array<std::vector<const char*>, kStageCount> outputs = {{
      {files::kGeneratedEvents, files::kGeneratedFrames, files::kGroundTruth},
      {files::kEvents, files::kFrameIndex},
      {files::kPossessions},
      {files::kPressures},
      {files::kTensor, files::kLabels},
      {files::kXgModel, files::kXgEval},
      {files::kOutcomeModel, files::kLossCurve},
      {files::kTransitions, files::kPossessionValues, files::kPolicyModel, files::kPolicyTrace},
      {files::kOpeReport, files::kOpeSummary, files::kMatchValues, files::kKde},
      {files::kScenarios},
  }};
  return outputs[static_cast<std::size_t>(s)];
}

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 init failed");
  }
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char b[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(b, sizeof(b), "%02x", md[i]);
    hex += b;
  }
  return hex;
}

/// Nearest pressure row for an event, on the continuous frame clock.
class PressureIndex {
 public:
  PressureIndex() = default;
  explicit PressureIndex(std::vector<FramePressure> rows) {
    for (auto& r : rows) by_match_[r.match_id].push_back(std::move(r));
    for (auto& [m, v] : by_match_)
      std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.time_s < b.time_s; });
  }

  bool empty() const { return by_match_.empty(); }

  std::optional<PressureVector> nearest(const std::string& match, int half, double time_s) const {
    auto it = by_match_.find(match);
    if (it == by_match_.end() || it->second.empty()) return std::nullopt;
    const auto& v = it->second;
    const double t = (half - 1) * pitch::kHalfLengthSeconds + time_s;
    auto pos = std::lower_bound(v.begin(), v.end(), t, [](const FramePressure& r, double x) { return r.time_s < x; });
    if (pos == v.end()) return v.back().z;
    if (pos == v.begin()) return pos->z;
    const auto lo = pos - 1;
    return t - lo->time_s <= pos->time_s - t ? lo->z : pos->z;
  }

 private:
  std::map<std::string, std::vector<FramePressure>> by_match_;
};

/// Reads a frame log one match at a time. Each match's frames must be contiguous.
class FrameReader {
 public:
  explicit FrameReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw std::runtime_error("cannot read " + path);
  }

  std::optional<std::vector<Frame>> next_match() {
    std::string chunk, match;
    std::size_t first_line = line_ + 1;
    if (!pending_.empty()) {
      match = pending_match_;
      chunk = std::move(pending_);
      pending_.clear();
      first_line = pending_line_;
    }
    std::string row;
    while (std::getline(in_, row)) {
      ++line_;
      if (text::trim(row).empty()) continue;
      const std::string id(text::trim(std::string_view(row).substr(0, row.find(','))));
      if (match.empty()) {
        match = id;
        first_line = line_;
      }
      if (id != match) {
        pending_match_ = id;
        pending_ = row + '\n';
        pending_line_ = line_;
        break;
      }
      chunk += row;
      chunk += '\n';
    }
    if (match.empty()) return std::nullopt;
    if (!seen_.insert(match).second)
      throw ValidationError(path_ + ": frames of match " + match + " are not contiguous");
    std::vector<Frame> frames;
    try {
      frames = parse_frames(chunk);
    } catch (const ParseError& e) {
      throw ParseError(path_ + ": " + std::string(e.what()).substr(std::string(e.what()).find(": ") + 2),
                       first_line + e.line - 1);
    }
    std::stable_sort(frames.begin(), frames.end(), [](const Frame& a, const Frame& b) { return a.time_s < b.time_s; });
    return frames;
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t line_ = 0;
  std::string pending_, pending_match_;
  std::size_t pending_line_ = 0;
  std::set<std::string> seen_;
};

struct RunOptions {
  std::function<void(const std::string&)> log;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, RunOptions opt = {}) : cfg_(std::move(cfg)), opt_(std::move(opt)) {
    cfg_.validate();
  }

  const PipelineConfig& config() const { return cfg_; }

  std::string path(const char* name) const { return (std::filesystem::path(cfg_.out_dir) / name).string(); }

  std::string events_input() const { return cfg_.synthetic ? path(files::kGeneratedEvents) : cfg_.events_path; }
  std::string frames_input() const { return cfg_.synthetic ? path(files::kGeneratedFrames) : cfg_.frames_path; }

  /// Stages that apply to this configuration, in order.
  std::vector<Stage> stages() const {
    std::vector<Stage> s;
    for (std::size_t i = 0; i < kStageCount; ++i) {
      const auto st = static_cast<Stage>(i);
      if (st == Stage::Generate && !cfg_.synthetic) continue;
      s.push_back(st);
    }
    return s;
  }

  void run_stage(Stage s) {
    std::filesystem::create_directories(cfg_.out_dir);
    const auto start = std::chrono::steady_clock::now();
    try {
      log(std::string("stage ") + std::string(to_string(s)));
      switch (s) {
        case Stage::Generate: generate(); break;
        case Stage::Ingest: ingest(); break;
        case Stage::Segment: segment(); break;
        case Stage::Pressure: pressure(); break;
        case Stage::States: states(); break;
        case Stage::TrainXg: train_xg(); break;
        case Stage::TrainOutcome: train_outcome(); break;
        case Stage::TrainPolicy: train_policy_stage(); break;
        case Stage::Evaluate: evaluate(); break;
        case Stage::Report: report(); break;
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      write_manifest(s);
      throw StageError(s, e.what());
    }
    write_manifest();
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    log("  " + std::string(to_string(s)) + " took " + text::format_fixed(took.count(), 1) + " s");
  }

  /// Runs every stage; the manifest records the failing stage if one throws.
  std::string run() {
    for (Stage s : stages()) run_stage(s);
    return path(files::kManifest);
  }

  /// Hashes of every stage output present in the artifact directory.
  nlohmann::json manifest(std::optional<Stage> failed = std::nullopt) const {
    nlohmann::json j;
    j["config"] = config_to_json(cfg_);
    auto& list = j["outputs"] = nlohmann::json::array();
    for (std::size_t i = 0; i < kStageCount; ++i) {
      for (const char* name : stage_outputs(static_cast<Stage>(i))) {
        const auto p = path(name);
        if (!std::filesystem::is_regular_file(p)) continue;
        list.push_back({{"stage", std::string(kStageNames[i])},
                        {"path", name},
                        {"bytes", std::filesystem::file_size(p)},
                        {"sha256", sha256_file(p)}});
      }
    }
    if (std::filesystem::is_regular_file(path(files::kTensor))) {
      std::ifstream in(path(files::kTensor), std::ios::binary);
      std::string header;
      std::getline(in, header);
      nlohmann::json shape = nlohmann::json::array();
      for (auto d : text::split(header, ',')) shape.push_back(text::parse_int(d).value_or(-1));
      j["tensor_shape"] = shape;
    }
    if (failed) j["failed_stage"] = std::string(to_string(*failed));
    return j;
  }

  void write_manifest(std::optional<Stage> failed = std::nullopt) const {
    text::write_file(path(files::kManifest), manifest(failed).dump(2) + "\n");
  }

  // Stage bodies, public so the CLI and the tests can drive them one by one.

  void generate() {
    const auto sc = cfg_.synthetic_config();
    std::filesystem::create_directories(std::filesystem::path(path(files::kGeneratedFrames)).parent_path());
    std::ofstream frames(path(files::kGeneratedFrames), std::ios::binary);
    if (!frames) throw std::runtime_error("cannot write " + path(files::kGeneratedFrames));
    std::vector<Event> events;
    GroundTruth truth;
    truth.behavioral_skew = sc.behavioral_skew;
    truth.goal_model = sc.goal_model;
    truth.keep_prob_out = sc.keep_prob_out;
    truth.keep_prob_foul = sc.keep_prob_foul;
    for (std::size_t m = 0; m < sc.n_matches; ++m) {
      auto match = generate_synthetic_match(sc, m);
      frames << serialize_frames(match.frames);
      std::move(match.events.begin(), match.events.end(), std::back_inserter(events));
      std::move(match.possessions.begin(), match.possessions.end(), std::back_inserter(truth.possessions));
    }
    frames.close();
    text::write_file(path(files::kGeneratedEvents), serialize_events(events));
    text::write_file(path(files::kGroundTruth), ground_truth_json(truth).dump(1) + "\n");
    log("  generated " + std::to_string(sc.n_matches) + " matches, " + std::to_string(events.size()) + " events");
  }

  void ingest() {
    const auto events = parse_event_log(events_input());
    if (events.empty()) throw ValidationError("no events in " + events_input());
    text::write_file(path(files::kEvents), serialize_events(events));
    std::string index = "match_id,frames,first_time_s,last_time_s\n";
    if (cfg_.has_frames()) {
      FrameReader reader(frames_input());
      std::set<std::string> with_frames;
      while (auto chunk = reader.next_match()) {
        if (chunk->empty()) continue;
        compute_velocities(*chunk);  // checks that every match has enough frames
        with_frames.insert(chunk->front().match_id);
        index += chunk->front().match_id + ',' + std::to_string(chunk->size()) + ',' +
                 text::format_double(chunk->front().time_s) + ',' + text::format_double(chunk->back().time_s) + '\n';
      }
      for (const auto& [m, off] : match_offsets(events))
        if (!with_frames.count(m)) throw ValidationError("match " + m + " has events but no tracking frames");
    }
    text::write_file(path(files::kFrameIndex), index);
    log("  " + std::to_string(events.size()) + " events");
  }

  void segment() {
    const auto events = read_events();
    const auto ps = segment_possessions(events);
    text::write_file(path(files::kPossessions), serialize_possessions(ps, match_offsets(events)));
    log("  " + std::to_string(ps.size()) + " possessions");
  }

  /// Pressure at the frame nearest to each event; other frames are not needed.
  void pressure() {
    std::vector<FramePressure> rows;
    if (cfg_.has_frames()) {
      const auto events = read_events();
      std::map<std::string, std::vector<std::size_t>> by_match;
      for (std::size_t i = 0; i < events.size(); ++i) by_match[events[i].match_id].push_back(i);
      std::map<std::string, std::vector<FramePressure>> per_match;
      FrameReader reader(frames_input());
      while (auto chunk = reader.next_match()) {
        if (chunk->empty()) continue;
        const auto it = by_match.find(chunk->front().match_id);
        if (it == by_match.end()) continue;
        TrackingIndex tracking(&*chunk);
        std::set<std::size_t> wanted;
        for (auto i : it->second)
          if (auto fi = tracking.nearest(events[i].match_id, events[i].half, events[i].time_s)) wanted.insert(*fi);
        auto& out = per_match[chunk->front().match_id];
        for (auto fi : wanted) {
          const Frame& f = tracking.frame(fi);
          if (!f.ball_holder) continue;
          out.push_back({f.match_id, f.time_s, tracking.pressure(fi)});
        }
      }
      for (auto& [m, v] : per_match) {
        std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.time_s < b.time_s; });
        std::move(v.begin(), v.end(), std::back_inserter(rows));
      }
    }
    text::write_file(path(files::kPressures), serialize_pressures(rows));
    log("  " + std::to_string(rows.size()) + " pressure rows");
  }

  void states() {
    const auto events = read_events();
    const auto ps = parse_possessions(text::read_file(path(files::kPossessions)), events);
    const StateType type = cfg_.state_type;
    std::vector<PossessionState> built(ps.size());
    if (type == StateType::II) {
      std::map<std::string, std::vector<std::size_t>> by_match;
      for (std::size_t i = 0; i < ps.size(); ++i) by_match[ps[i].match_id].push_back(i);
      std::vector<bool> done(ps.size(), false);
      FrameReader reader(frames_input());
      while (auto chunk = reader.next_match()) {
        if (chunk->empty()) continue;
        auto it = by_match.find(chunk->front().match_id);
        if (it == by_match.end()) continue;
        TrackingIndex tracking(&*chunk);
        for (auto i : it->second) {
          built[i] = build_state(ps[i], type, tracking);
          done[i] = true;
        }
      }
      for (std::size_t i = 0; i < ps.size(); ++i)
        if (!done[i]) throw ValidationError("no tracking frames for match " + ps[i].match_id);
    } else {
      const PressureIndex pidx = type == StateType::III ? read_pressures() : PressureIndex();
      for (std::size_t i = 0; i < ps.size(); ++i) {
        std::vector<ActionFeatures> f;
        for (const auto& e : ps[i].actions) f.push_back(features_of(e, type == StateType::III, pidx));
        built[i] = build_state(ps[i], type, f);
      }
    }
    const auto t = stack_states(built, type);
    std::string why;
    if (!check_state_invariants(t, &why)) throw ValidationError("state tensor invariant violated: " + why);
    write_tensor(path(files::kTensor), path(files::kLabels), t);
    log("  tensor [" + std::to_string(t.size()) + ", " + std::to_string(kMaxActions) + ", " +
        std::to_string(t.width) + "]");
  }

  void train_xg() {
    const auto events = read_events();
    const auto ps = parse_possessions(text::read_file(path(files::kPossessions)), events);
    const PressureIndex pidx = read_pressures();
    const bool wp = !pidx.empty();
    std::vector<ShotRecord> shots;
    std::size_t goals = 0;
    for (const auto& p : ps) {
      if (p.ending != EndingAction::Shot) continue;
      const auto f = features_of(p.ending_event, wp, pidx);
      shots.push_back({xg_features(f, wp), p.ending_event.result == ActionResult::Successful});
      goals += shots.back().goal;
    }
    if (shots.size() < cfg_.xg_folds) throw ValidationError("too few shots for the goal model");
    XgFitReport rep;
    const auto model = fit_xg(shots, cfg_.xg_options(), &rep, xg_feature_names(wp));
    const auto ev = evaluate_xg(shots, cfg_.xg_folds, cfg_.xg_seed(), cfg_.xg_options());
    text::write_file(path(files::kXgModel), serialize_model(model));
    std::string s = "shots=" + std::to_string(shots.size()) + "\ngoals=" + std::to_string(goals) +
                    "\niterations=" + std::to_string(rep.iterations) + "\nconverged=" + (rep.converged ? "1" : "0") +
                    "\nfolds=" + std::to_string(ev.folds) + "\nauc=" + text::format_double(ev.auc) +
                    "\nbrier=" + text::format_double(ev.brier) + "\n";
    for (const auto& w : ev.warnings) s += "warning=" + w + "\n";
    text::write_file(path(files::kXgEval), s);
    log("  " + std::to_string(shots.size()) + " shots, cv auc " + text::format_fixed(ev.auc, 3));
  }

  void train_outcome() {
    const auto t = read_states();
    const auto res = train_classifier(t, cfg_.classifier_config());
    text::write_file(path(files::kOutcomeModel), res.net.serialize());
    text::write_file(path(files::kLossCurve), serialize_loss_curve(res.curve));
    if (!res.curve.empty()) log("  val acc " + text::format_fixed(res.curve.back().val_acc, 3));
  }

  void train_policy_stage() {
    const auto events = read_events();
    const auto ps = parse_possessions(text::read_file(path(files::kPossessions)), events);
    const auto t = read_states();
    if (t.size() != ps.size()) throw ValidationError("state tensor and possession list differ in length");
    const auto xg = parse_model(text::read_file(path(files::kXgModel)));
    const auto behavioral = read_net(files::kOutcomeModel);
    const PressureIndex pidx = read_pressures();
    const bool wp = xg.weights.size() == xg_feature_names(true).size();
    if (wp && pidx.empty()) throw ValidationError("goal model uses pressure but no pressure rows exist");

    const auto q_all = predict_all(behavioral, t);
    std::vector<double> pv(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const Event& e = ps[i].actions.empty() ? ps[i].ending_event : ps[i].actions.back();
      const double p_goal = predict_goal_prob(xg, xg_features(features_of(e, wp, pidx), wp));
      pv[i] = possession_value(q_all[i][index(EndingAction::Shot)], p_goal);
    }

    const auto table = build_transition_table(episode_inputs(ps, pv), q_all);
    text::write_file(path(files::kTransitions), serialize_transitions(table));
    std::string pvs = "state_index,match_id,possession_id,team,pv\n";
    for (std::size_t i = 0; i < ps.size(); ++i)
      pvs += std::to_string(i) + ',' + ps[i].match_id + ',' + std::to_string(ps[i].possession_id) + ',' +
             std::string(to_string(ps[i].team)) + ',' + text::format_double(pv[i]) + '\n';
    text::write_file(path(files::kPossessionValues), pvs);
    if (table.dropped) log("  dropped " + std::to_string(table.dropped) + " transitions with non-finite reward");

    const auto res = train_policy(table, t, behavioral, cfg_.policy_config());
    text::write_file(path(files::kPolicyModel), res.net.serialize());
    text::write_file(path(files::kPolicyTrace), serialize_trace(res.trace));
    if (res.aborted) log("  warning: " + res.diagnostic);
    log("  " + std::to_string(table.episodes.size()) + " episodes; IS " +
        text::format_fixed(res.trace.front().mean_reward_is, 4) + " -> " +
        text::format_fixed(res.trace.back().mean_reward_is, 4));
  }

  void evaluate() {
    const auto t = read_states();
    const auto table = read_transitions();
    const auto policy = read_net(files::kPolicyModel);
    const auto pg = cfg_.policy_config();
    const auto returns = episode_returns(table, pg.gamma);
    const auto eps = ope_episodes(table, policy_rows(policy, t, table), qhat_rows(table, t, pg.gamma), returns.raw);
    const auto is = is_value(eps, pg.ope());
    const auto dr = dr_value(eps, pg.ope());
    if (is.degenerate) throw ValidationError("target policy has no support on the logged actions");

    std::map<std::size_t, double> dr_by_id;
    for (std::size_t k = 0; k < dr.episode_ids.size(); ++k) dr_by_id[dr.episode_ids[k]] = dr.values[k];
    std::string rep = "episode_id,value_is,value_dr\n";
    for (std::size_t k = 0; k < is.episode_ids.size(); ++k)
      rep += std::to_string(is.episode_ids[k]) + ',' + text::format_double(is.values[k]) + ',' +
             text::format_double(dr_by_id.at(is.episode_ids[k])) + '\n';
    text::write_file(path(files::kOpeReport), rep);

    // The densities compare per-match mean rewards, one value per match.
    const auto match_of = read_possession_matches(t.size());
    std::map<std::string, std::array<double, 3>> sums;  // behavioral, IS, DR
    std::map<std::string, std::array<std::size_t, 2>> counts;
    std::map<std::size_t, std::size_t> block_of;
    for (std::size_t e = 0; e < table.episodes.size(); ++e) {
      const auto& m = match_of.at(table.rows[table.episodes[e].begin].state_index);
      sums[m][0] += returns.raw[e];
      counts[m][0] += 1;
      block_of[eps[e].id] = e;
    }
    for (std::size_t k = 0; k < is.episode_ids.size(); ++k) {
      const auto& m = match_of.at(table.rows[table.episodes[block_of.at(is.episode_ids[k])].begin].state_index);
      sums[m][1] += is.values[k];
      sums[m][2] += dr_by_id.at(is.episode_ids[k]);
      counts[m][1] += 1;
    }
    std::vector<double> match_b, match_o;
    std::size_t improved = 0;
    std::string mv = "match_id,episodes,behavioral_mean,is_mean,dr_mean\n";
    for (const auto& [m, sm] : sums) {
      const auto& c = counts[m];
      if (c[1] == 0) continue;
      const double b = sm[0] / static_cast<double>(c[0]), o = sm[1] / static_cast<double>(c[1]);
      match_b.push_back(b);
      match_o.push_back(o);
      improved += o > b;
      mv += m + ',' + std::to_string(c[0]) + ',' + text::format_double(b) + ',' + text::format_double(o) + ',' +
            text::format_double(sm[2] / static_cast<double>(c[1])) + '\n';
    }
    text::write_file(path(files::kMatchValues), mv);

    const auto kde = kde_summary(match_b, match_o);
    text::write_file(path(files::kKde), serialize_kde(kde));
    const auto per_episode = detail::moments(is.values);
    auto kv = [](const std::string& k, double v) { return k + "=" + text::format_double(v) + "\n"; };
    std::string s = "episodes=" + std::to_string(eps.size()) + "\nexcluded=" + std::to_string(is.excluded) +
                    "\nmatches=" + std::to_string(match_b.size()) + "\nmatches_improved=" + std::to_string(improved) + "\n";
    s += kv("behavioral_mean", detail::moments(returns.raw).mean) + kv("behavioral_episode_var", detail::moments(returns.raw).var);
    s += kv("is_mean", is.mean) + kv("is_sd", is.sd) + kv("is_episode_var", per_episode.var);
    s += kv("dr_mean", dr.mean) + kv("dr_sd", dr.sd);
    s += kv("match_mean_behavioral", kde.mean_behavioral) + kv("match_mean_optimal", kde.mean_optimal);
    s += kv("match_var_behavioral", kde.var_behavioral) + kv("match_var_optimal", kde.var_optimal);
    s += kv("kde_bandwidth_behavioral", kde.bandwidth_behavioral) + kv("kde_bandwidth_optimal", kde.bandwidth_optimal);
    s += kv("kde_var_behavioral", kde.kde_var_behavioral) + kv("kde_var_optimal", kde.kde_var_optimal);
    s += kv("above_zero_behavioral", kde.above_zero_behavioral) + kv("above_zero_optimal", kde.above_zero_optimal);
    for (const auto& w : kde.warnings) s += "warning=" + w + "\n";
    text::write_file(path(files::kOpeSummary), s);
    log("  behavioral " + text::format_fixed(detail::moments(returns.raw).mean, 4) + ", IS " + text::format_fixed(is.mean, 4) +
        ", DR " + text::format_fixed(dr.mean, 4));
  }

  void report() {
    const auto t = read_states();
    const auto table = read_transitions();
    const auto policy = read_net(files::kPolicyModel);
    const auto pv_all = read_possession_values(t.size());
    std::vector<double> pv(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) pv[i] = pv_all.at(table.rows[i].state_index);
    const auto rows = scenario_report(table, policy_rows(policy, t, table), pv,
                                      qhat_rows(table, t, cfg_.policy_config().gamma), cfg_.top_k);
    text::write_file(path(files::kScenarios), serialize_scenarios(rows));
    log("  " + std::to_string(rows.size()) + " scenarios");
  }

  // Shared readers.

  std::vector<Event> read_events() const { return parse_event_log(path(files::kEvents)); }

  PressureIndex read_pressures() const { return PressureIndex(parse_pressures(text::read_file(path(files::kPressures)))); }

  StateTensor read_states() const { return read_tensor(path(files::kTensor), path(files::kLabels)); }

  TransitionTable read_transitions() const { return parse_transitions(text::read_file(path(files::kTransitions))); }

  SequenceNet read_net(const char* name) const { return SequenceNet::deserialize(text::read_file(path(name))); }

  std::vector<double> read_possession_values(std::size_t n) const {
    const std::string content = text::read_file(path(files::kPossessionValues));
    const auto rows = text::lines(content);
    std::vector<double> pv(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (text::trim(rows[i]).empty()) continue;
      const auto f = text::split(rows[i], ',');
      const auto idx = f.size() == 5 ? text::parse_int(f[0]) : std::nullopt;
      const auto v = f.size() == 5 ? text::parse_double(f[4]) : std::nullopt;
      if (!idx || !v || *idx < 0 || static_cast<std::size_t>(*idx) >= n) throw ParseError("bad possession value row", i + 1);
      pv[static_cast<std::size_t>(*idx)] = *v;
    }
    return pv;
  }

  std::vector<std::string> read_possession_matches(std::size_t n) const {
    const std::string content = text::read_file(path(files::kPossessionValues));
    const auto rows = text::lines(content);
    std::vector<std::string> m(n);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (text::trim(rows[i]).empty()) continue;
      const auto f = text::split(rows[i], ',');
      const auto idx = f.size() == 5 ? text::parse_int(f[0]) : std::nullopt;
      if (!idx || *idx < 0 || static_cast<std::size_t>(*idx) >= n) throw ParseError("bad possession value row", i + 1);
      m[static_cast<std::size_t>(*idx)] = std::string(f[1]);
    }
    return m;
  }

  static ActionFeatures features_of(const Event& e, bool with_pressure, const PressureIndex& pidx) {
    ActionFeatures f = extract_features(e);
    if (with_pressure) {
      f.pressure = pidx.nearest(e.match_id, e.half, e.time_s);
      if (!f.pressure) throw ValidationError("no pressure rows for match " + e.match_id);
    }
    return f;
  }

  /// Episodes of both teams in corpus order, numbered from 1. The state index of a
  /// possession is its position in the possession list.
  static std::vector<EpisodeInput> episode_inputs(const std::vector<Possession>& ps, const std::vector<double>& pv) {
    std::map<std::pair<std::string, std::size_t>, std::size_t> position;
    for (std::size_t i = 0; i < ps.size(); ++i) position[{ps[i].match_id, ps[i].possession_id}] = i;
    std::vector<std::pair<std::size_t, EpisodeInput>> all;
    for (Team team : {Team::Home, Team::Away}) {
      for (const auto& ep : build_episodes(ps, team)) {
        EpisodeInput in;
        in.team = team;
        for (const auto& p : ep.possessions) {
          const std::size_t i = position.at({p.match_id, p.possession_id});
          in.state_index.push_back(i);
          in.actions.push_back(p.ending);
          in.pv.push_back(pv[i]);
          in.possession_number.push_back(p.possession_id);
        }
        all.emplace_back(in.state_index.front(), std::move(in));
      }
    }
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<EpisodeInput> out;
    for (auto& [first, in] : all) {
      in.episode_id = out.size() + 1;
      out.push_back(std::move(in));
    }
    return out;
  }

 private:
  void log(const std::string& msg) const {
    if (opt_.log) opt_.log(msg);
  }

  PipelineConfig cfg_;
  RunOptions opt_;
};

/// End-to-end run; returns the manifest path.
inline std::string run_pipeline(const PipelineConfig& cfg, RunOptions opt = {}) {
  Pipeline p(cfg, std::move(opt));
  return p.run();
}

}  // namespace prl
