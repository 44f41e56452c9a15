#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "possession_rl/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Offline policy optimization for possession-ending actions"};
  app.require_subcommand(1);

  std::string config_path, state_type, out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON pipeline configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--state-type", state_type, "State representation: I, II or III");
  app.add_option("--out", out_dir, "Artifact directory");
  app.add_flag("-q,--quiet", quiet, "Only print errors");

  std::optional<prl::Stage> chosen;
  for (std::size_t i = 0; i < prl::kStageCount; ++i) {
    const auto stage = static_cast<prl::Stage>(i);
    app.add_subcommand(std::string(prl::kStageNames[i]), "Run the " + std::string(prl::kStageNames[i]) + " stage")
        ->callback([&chosen, stage] { chosen = stage; });
  }
  app.add_subcommand("run", "Run every stage in order");
  app.fallthrough();

  CLI11_PARSE(app, argc, argv);

  prl::PipelineConfig cfg;
  try {
    if (!config_path.empty()) cfg = prl::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!state_type.empty()) {
      auto t = prl::state_type_from_string(state_type);
      if (!t) throw prl::ValidationError("--state-type must be I, II or III");
      cfg.state_type = *t;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  prl::RunOptions opt;
  if (!quiet) opt.log = [](const std::string& m) { std::cerr << m << "\n"; };
  try {
    prl::Pipeline pipeline(cfg, opt);
    if (chosen) {
      pipeline.run_stage(*chosen);
    } else {
      std::cout << pipeline.run() << "\n";
    }
  } catch (const prl::StageError& e) {
    std::cerr << "error: stage " << e.what() << "\n";
    return prl::stage_exit_code(e.stage);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
