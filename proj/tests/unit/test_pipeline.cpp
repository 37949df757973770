#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "montage/eval.hpp"
#include "montage/pipeline.hpp"
#include "montage/render.hpp"

using namespace montage;

namespace {

struct CliResult {
  int code = -1;
  std::string output;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs the montage binary with stdout and stderr captured together.
CliResult cli(const std::string& args, const fixture::TempDir& dir) {
  const auto log = dir / "cli.log";
  const std::string cmd = std::string("'") + MONTAGE_CLI + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

std::filesystem::path synthetic(const fixture::TempDir& dir, std::uint64_t seed = 7) {
  return write_synthetic_project(generate_synthetic_project(seed), dir / "project");
}

Json artifact(const std::filesystem::path& p) { return Json::parse(slurp(p)); }

}  // namespace

TEST(Cli, GoldenPath) {
  fixture::TempDir dir;
  auto manifest = synthetic(dir);
  auto r = cli("run '" + manifest.string() + "' --provider mock", dir);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto out = manifest.parent_path() / "artifacts";
  for (const char* f : {"timeline.json", "edl.json", "harmony.json", "harmony_sweep.csv", "plan.json"})
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  auto timeline = artifact(out / "timeline.json").get<Timeline>();
  const MediaRef music{"music", "", 30.0, MediaKind::audio};
  EXPECT_TRUE(validate_timeline(timeline, music).ok());
  auto edl = parse_edl(artifact(out / "edl.json"));
  EXPECT_EQ(edl.timeline(), timeline);
  EXPECT_NE(r.output.find("provider calls"), std::string::npos);
}

TEST(Cli, EditWithoutPlanNamesMissingStage) {
  fixture::TempDir dir;
  auto manifest = synthetic(dir);
  auto r = cli("edit '" + manifest.string() + "'", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("plan"), std::string::npos) << r.output;
}

TEST(Cli, StagedCommandsMatchRun) {
  fixture::TempDir dir;
  auto manifest = synthetic(dir);
  for (const char* stage : {"deconstruct", "parse-audio", "plan", "edit", "render", "eval"}) {
    auto r = cli(std::string(stage) + " '" + manifest.string() + "' --out '" + (dir / "staged").string() + "'", dir);
    ASSERT_EQ(r.code, 0) << stage << ": " << r.output;
  }
  auto r = cli("run '" + manifest.string() + "' --out '" + (dir / "whole").string() + "'", dir);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(slurp(dir / "staged" / "timeline.json"), slurp(dir / "whole" / "timeline.json"));
}

TEST(Cli, ExitCodes) {
  fixture::TempDir dir;
  auto manifest = synthetic(dir);
  EXPECT_EQ(cli("run '" + (dir / "missing.json").string() + "'", dir).code, 1);
  EXPECT_EQ(cli("frobnicate", dir).code, 1);
  EXPECT_EQ(cli("run '" + manifest.string() + "' --config '{\"workers\": 0}'", dir).code, 1);

  // No credentials for the network provider.
  const std::string no_key = "env -u MONTAGE_API_KEY ";
  const auto cmd = no_key + "'" + MONTAGE_CLI + "' run '" + manifest.string() + "' --provider http --out '" +
                   (dir / "http").string() + "' > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 2);

  // Three single-shot scenes cannot fill 30 s of music without reuse.
  fixture::TempDir small;
  SyntheticParams params;
  params.n_scenes = 3;
  params.shots_per_scene = 1;
  auto tiny = write_synthetic_project(generate_synthetic_project(1, params), small / "p");
  EXPECT_EQ(cli("run '" + tiny.string() + "' -q", small).code, 3);
}

TEST(Pipeline, SecondRunIsAllCacheHitsWithoutProviderCalls) {
  fixture::TempDir dir;
  auto manifest = Manifest::load(synthetic(dir));
  RunOptions opt;
  opt.out_dir = dir / "out";
  auto first = Pipeline(manifest, opt).run_all();
  EXPECT_GT(first.provider_sends, 0u);
  for (const auto& s : first.stages) EXPECT_FALSE(s.cache_hit);

  auto second = Pipeline(manifest, opt).run_all();
  EXPECT_EQ(second.provider_sends, 0u);
  ASSERT_EQ(second.stages.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_TRUE(second.stages[i].cache_hit);
    EXPECT_EQ(second.stages[i].key, first.stages[i].key);
  }
}

TEST(Pipeline, ChangedConfigInvalidatesDownstreamOnly) {
  fixture::TempDir dir;
  auto manifest = Manifest::load(synthetic(dir));
  RunOptions opt;
  opt.out_dir = dir / "out";
  Pipeline(manifest, opt).run_all();

  opt.overrides = {{"eval", {{"threshold", 0.2}}}};
  Pipeline p(manifest, opt);
  EXPECT_TRUE(p.run_stage(Stage::edit).cache_hit);
  EXPECT_FALSE(p.run_stage(Stage::eval).cache_hit);
  EXPECT_EQ(p.provider_sends(), 0u);

  opt.overrides = {{"editor", {{"max_backtracks", 3}}}};
  Pipeline q(manifest, opt);
  try {
    q.run_stage(Stage::eval);
    FAIL() << "expected a stale-artifact error";
  } catch (const UserError& e) {
    EXPECT_NE(std::string(e.what()).find("edit"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, Deterministic) {
  fixture::TempDir dir;
  auto manifest = Manifest::load(synthetic(dir));
  RunOptions a, b;
  a.out_dir = dir / "a";
  b.out_dir = dir / "b";
  b.overrides = {{"workers", 1}};
  Pipeline(manifest, a).run_all();
  Pipeline(manifest, b).run_all();
  for (const char* f : {"timeline.json", "edl.json", "harmony.json", "plan.json", "deconstruct.json"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
}

TEST(Pipeline, SeedOverrideChangesKeys) {
  fixture::TempDir dir;
  auto manifest = Manifest::load(synthetic(dir));
  RunOptions a, b;
  b.seed = 99;
  EXPECT_NE(Pipeline(manifest, a).stage_key(Stage::plan), Pipeline(manifest, b).stage_key(Stage::plan));
}

TEST(Pipeline, EmptySubtitlesGiveAnonymousRoster) {
  fixture::TempDir dir;
  auto path = synthetic(dir);
  fixture::write(path.parent_path() / "subtitles.srt", "");
  RunOptions opt;
  opt.out_dir = dir / "out";
  opt.plan_only = true;
  auto r = Pipeline(Manifest::load(path), opt).run_all();
  EXPECT_EQ(r.stages.size(), 3u);
  auto d = artifact(dir / "out" / "deconstruct.json")["data"].get<Deconstruction>();
  EXPECT_TRUE(d.roster.empty());
  EXPECT_EQ(d.scenes.size(), 5u);
}

TEST(Pipeline, ProviderOverrideIsUsed) {
  fixture::TempDir dir;
  auto manifest = Manifest::load(synthetic(dir));
  auto truth = std::make_shared<const GroundTruth>(generate_synthetic_project(7).truth);
  auto provider = fixture::mock(truth);
  RunOptions opt;
  opt.out_dir = dir / "out";
  opt.provider_override = provider;
  opt.plan_only = true;
  Pipeline(manifest, opt).run_all();
  EXPECT_GT(provider->sends(), 0u);
}

TEST(Manifest, RejectsMalformed) {
  fixture::TempDir dir;
  fixture::write(dir / "m.json", R"({"version": 2, "videos": []})");
  EXPECT_THROW(Manifest::load(dir / "m.json"), UserError);
  fixture::write(dir / "m.json", R"({"version": 1, "videos": []})");
  EXPECT_THROW(Manifest::load(dir / "m.json"), UserError);
  fixture::write(dir / "m.json", "not json");
  EXPECT_THROW(Manifest::load(dir / "m.json"), UserError);
}

TEST(Config, PrecedenceDefaultsManifestOverrides) {
  auto c = resolve_config({{"footage", {{"tau", 0.7}}}, {"eval", {{"threshold", 0.2}}}},
                          {{"eval", {{"threshold", 0.05}}}});
  EXPECT_DOUBLE_EQ(c.footage.tau, 0.7);
  EXPECT_DOUBLE_EQ(c.harmony_threshold, 0.05);
  EXPECT_EQ(c.editor.max_backtracks, 6);
  EXPECT_THROW(resolve_config({{"provider", {{"attempts", 0}}}}, Json::object()), UserError);
}

TEST(Stage, NamesRoundTrip) {
  for (auto s : {Stage::deconstruct, Stage::parse_audio, Stage::plan, Stage::edit, Stage::render, Stage::eval})
    EXPECT_EQ(parse_stage(std::string(to_string(s))), s);
  EXPECT_THROW(parse_stage("review-all"), UserError);
}
