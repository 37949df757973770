// montage: staged command-line driver.
//
//   montage generate --seed 7 --out proj/
//   montage run proj/manifest.json --provider mock
//   montage plan proj/manifest.json      (and deconstruct, parse-audio, edit,
//                                         review, render, eval)
//
// Exit codes: 0 ok, 1 user error, 2 provider error, 3 unrecoverable spec.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "montage/eval.hpp"
#include "montage/pipeline.hpp"

namespace {

struct Flags {
  std::string manifest;
  std::string provider = "mock";
  std::optional<std::uint64_t> seed;
  bool plan_only = false;
  bool no_render = false;
  std::string out_dir;
  std::string config;
  std::size_t workers = 0;
  bool verbose = false;
  bool quiet = false;
};

montage::Json load_overrides(const Flags& f) {
  montage::Json j = montage::Json::object();
  if (!f.config.empty()) {
    if (f.config.front() == '{') {
      j = montage::Json::parse(f.config, nullptr, false);
    } else {
      std::ifstream in(f.config);
      if (!in) throw montage::UserError("cannot open config " + f.config);
      j = montage::Json::parse(in, nullptr, false);
    }
    if (j.is_discarded() || !j.is_object()) throw montage::UserError("--config must be a JSON object");
  }
  if (f.workers > 0) j["workers"] = f.workers;
  return j;
}

int run(const std::string& command, const Flags& f) {
  if (f.verbose) spdlog::set_level(spdlog::level::debug);
  if (f.quiet) spdlog::set_level(spdlog::level::warn);

  montage::RunOptions opt;
  opt.provider = f.provider;
  opt.seed = f.seed;
  opt.plan_only = f.plan_only;
  opt.no_render = f.no_render;
  if (!f.out_dir.empty()) opt.out_dir = f.out_dir;
  opt.overrides = load_overrides(f);

  montage::Pipeline pipeline(montage::Manifest::load(f.manifest), opt);
  if (command == "run") {
    auto r = pipeline.run_all();
    for (const auto& s : r.stages)
      std::printf("%-12s %s %s\n", std::string(montage::to_string(s.stage)).c_str(), s.cache_hit ? "cached " : "ran    ",
                  s.key.c_str());
    for (const auto& w : r.warnings) std::printf("warning: %s\n", w.c_str());
    std::printf("artifacts: %s\nprovider calls: %zu\n", pipeline.out_dir().string().c_str(), r.provider_sends);
    return 0;
  }
  // `review` runs inside the edit loop.
  const auto stage = montage::parse_stage(command == "review" ? "edit" : command);
  auto o = pipeline.run_stage(stage);
  std::printf("%-12s %s %s\n", command.c_str(), o.cache_hit ? "cached " : "ran    ", o.key.c_str());
  std::printf("artifact: %s\n", pipeline.artifact_path(stage).string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Music-driven montage editing pipeline"};
  app.require_subcommand(1);
  Flags f;
  std::string command;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("manifest", f.manifest, "Project manifest (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--provider", f.provider, "Model provider")->check(CLI::IsMember({"mock", "http"}));
    sub->add_option("--seed", f.seed, "Seed (overrides the manifest)");
    sub->add_option("--out", f.out_dir, "Artifact directory (default <manifest dir>/artifacts)");
    sub->add_option("--config", f.config, "Config patch: JSON object or path to a JSON file");
    sub->add_option("-j,--workers", f.workers, "Worker threads per stage");
    sub->add_flag("-v,--verbose", f.verbose, "Debug logging (every agent action)");
    sub->add_flag("-q,--quiet", f.quiet, "Warnings and errors only");
  };

  auto* run_cmd = app.add_subcommand("run", "Run every stage");
  add_common(run_cmd);
  run_cmd->add_flag("--plan-only", f.plan_only, "Stop after planning");
  run_cmd->add_flag("--no-render", f.no_render, "Write the EDL but skip rendering");
  for (const char* name : {"deconstruct", "parse-audio", "plan", "edit", "review", "render", "eval"}) {
    auto* sub = app.add_subcommand(name, std::string("Run the ") + name + " stage");
    add_common(sub);
    if (std::string(name) == "render") sub->add_flag("--no-render", f.no_render, "Write the EDL only");
  }

  std::uint64_t gen_seed = 0;
  montage::SyntheticParams params;
  std::string gen_out = "synthetic";
  auto* gen = app.add_subcommand("generate", "Write a synthetic project");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--scenes", params.n_scenes, "Scenes")->check(CLI::PositiveNumber);
  gen->add_option("--shots", params.shots_per_scene, "Shots per scene")->check(CLI::PositiveNumber);
  gen->add_option("--bpm", params.bpm, "Tempo")->check(CLI::PositiveNumber);
  gen->add_option("--length", params.music_len, "Music length in seconds")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help exits 0; any usage error is a user error.
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      auto p = montage::generate_synthetic_project(gen_seed, params);
      std::printf("%s\n", montage::write_synthetic_project(p, gen_out).string().c_str());
      return 0;
    }
    for (auto* sub : app.get_subcommands()) command = sub->get_name();
    return run(command, f);
  } catch (const montage::Error& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
