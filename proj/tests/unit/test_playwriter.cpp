#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "montage/playwriter.hpp"
#include "oracles.hpp"

using namespace montage;

namespace {

std::vector<Scene> scenes(std::size_t n) {
  std::vector<Scene> out;
  for (std::size_t i = 1; i <= n; ++i) {
    Scene z;
    z.id = "Z" + std::to_string(i);
    z.summary = "Scene " + std::to_string(i) + " takes place on pier " + std::to_string(i) + ". More.";
    z.embedding = embed_text(z.summary);
    out.push_back(z);
  }
  return out;
}

std::vector<MusicUnit> units(std::size_t n, double len = 10.0) {
  std::vector<MusicUnit> out;
  for (std::size_t i = 0; i < n; ++i) {
    MusicUnit u;
    u.id = "U" + std::to_string(i + 1);
    u.start = len * i;
    u.end = len * (i + 1);
    out.push_back(u);
  }
  return out;
}

std::string allocation_reply(const std::vector<std::pair<std::string, std::vector<std::string>>>& as) {
  Json a = Json::array();
  for (const auto& [u, zs] : as) a.push_back({{"unit", u}, {"scenes", zs}});
  return Json{{"assignments", a}, {"storyline", "s"}}.dump();
}

const Instruction kInstruction{"A story about the pier", InstructionCategory::narrative_centric, std::nullopt};

}  // namespace

TEST(Allocation, SingleUnitTakesReply) {
  auto [backend, provider] = fixture::scripted(
      [](const ModelRequest&, std::size_t) { return allocation_reply({{"U1", {"Z1", "Z2", "Z3"}}}); });
  auto r = allocate_scenes(units(1), scenes(3), kInstruction, *provider);
  EXPECT_EQ(r.regenerations, 0);
  EXPECT_FALSE(r.repaired);
  ASSERT_EQ(r.proposal.assignments.size(), 1u);
  EXPECT_EQ(r.proposal.assignments[0].scenes, (std::vector<std::string>{"Z1", "Z2", "Z3"}));
  EXPECT_EQ(backend->count(Task::allocation), 1u);
}

TEST(Allocation, SharedSceneTriggersOneRegeneration) {
  auto [backend, provider] = fixture::scripted([](const ModelRequest&, std::size_t call) {
    if (call == 0) return allocation_reply({{"U1", {"Z1", "Z2"}}, {"U2", {"Z2", "Z3"}}});
    return allocation_reply({{"U1", {"Z1", "Z2"}}, {"U2", {"Z3"}}});
  });
  auto r = allocate_scenes(units(2), scenes(3), kInstruction, *provider);
  EXPECT_EQ(r.regenerations, 1);
  EXPECT_FALSE(r.repaired);
  EXPECT_TRUE(validate_allocation(r.proposal).empty());
  auto reqs = backend->requests();
  ASSERT_EQ(reqs.size(), 2u);
  EXPECT_FALSE(reqs[0].context.contains("forbidden_reuse"));
  EXPECT_EQ(reqs[1].context.at("forbidden_reuse"), Json::array({"Z2"}));
}

TEST(Allocation, PersistentViolationIsRepairedKeepingFirstUnit) {
  auto [backend, provider] = fixture::scripted([](const ModelRequest&, std::size_t) {
    return allocation_reply({{"U1", {"Z1", "Z2"}}, {"U2", {"Z2", "Z3"}}});
  });
  AllocationConfig cfg;
  cfg.max_regenerations = 2;
  auto r = allocate_scenes(units(2), scenes(3), kInstruction, *provider, cfg);
  EXPECT_EQ(r.regenerations, 2);
  EXPECT_TRUE(r.repaired);
  EXPECT_EQ(backend->count(Task::allocation), 3u);
  EXPECT_EQ(*r.proposal.scenes_for("U1"), (std::vector<std::string>{"Z1", "Z2"}));
  EXPECT_EQ(*r.proposal.scenes_for("U2"), (std::vector<std::string>{"Z3"}));
  EXPECT_TRUE(validate_allocation(r.proposal).empty());
}

TEST(Allocation, UnknownScenesAreDroppedAndMissingUnitsAreEmpty) {
  auto [backend, provider] = fixture::scripted(
      [](const ModelRequest&, std::size_t) { return allocation_reply({{"U1", {"Z1", "Z99", "Z2"}}}); });
  AllocationConfig cfg;
  cfg.max_regenerations = 0;
  EXPECT_THROW(allocate_scenes(units(2), scenes(2), kInstruction, *provider, cfg), UnrecoverableSpecError);
}

TEST(Allocation, FewerScenesThanUnitsIsUserError) {
  auto provider = fixture::mock();
  EXPECT_THROW(allocate_scenes(units(3), scenes(2), kInstruction, *provider), UserError);
}

TEST(Allocation, MockProposalIsDisjointAndCovering) {
  auto provider = fixture::mock();
  auto r = allocate_scenes(units(3), scenes(7), kInstruction, *provider);
  EXPECT_TRUE(validate_allocation(r.proposal).empty());
  std::size_t total = 0;
  for (const auto& a : r.proposal.assignments) total += a.scenes.size();
  EXPECT_EQ(total, 7u);
}

TEST(ValidateAllocation, Examples) {
  AllocationProposal p;
  p.assignments = {{"U1", {"Z1", "Z2"}}, {"U2", {"Z2"}}, {"U3", {}}};
  auto v = validate_allocation(p);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0], (AllocationViolation{AllocationViolationKind::shared_scene, "Z2", "U1", "U2"}));
  EXPECT_EQ(v[1], (AllocationViolation{AllocationViolationKind::empty_unit, "", "U3", ""}));

  p.assignments = {{"U1", {"Z1"}}, {"U2", {"Z2"}}};
  EXPECT_TRUE(validate_allocation(p).empty());
}

TEST(ValidateAllocation, MatchesPairwiseOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_units = 1 + rng() % 8;
    AllocationProposal p;
    std::vector<std::pair<std::string, std::vector<std::string>>> raw;
    for (std::size_t u = 0; u < n_units; ++u) {
      UnitAssignment a{"U" + std::to_string(u + 1), {}};
      const std::size_t k = rng() % 6;
      for (std::size_t i = 0; i < k; ++i) {
        auto z = "Z" + std::to_string(1 + rng() % 50);
        if (std::find(a.scenes.begin(), a.scenes.end(), z) == a.scenes.end()) a.scenes.push_back(z);
      }
      raw.push_back({a.unit, a.scenes});
      p.assignments.push_back(a);
    }
    std::set<std::tuple<std::string, std::string, std::string>> got;
    std::size_t empty = 0;
    for (const auto& v : validate_allocation(p)) {
      if (v.kind == AllocationViolationKind::shared_scene)
        got.insert({v.scene, v.first_unit, v.second_unit});
      else
        ++empty;
    }
    ASSERT_EQ(got, oracle::shared_scenes(raw)) << "trial " << trial;
    std::size_t want_empty = 0;
    for (const auto& a : raw) want_empty += a.second.empty();
    ASSERT_EQ(empty, want_empty);

    auto fixed = repair_allocation(p);
    for (const auto& v : validate_allocation(fixed)) ASSERT_NE(v.kind, AllocationViolationKind::shared_scene);
    // Repair keeps every scene in the first unit that listed it.
    std::set<std::string> seen;
    for (std::size_t u = 0; u < raw.size(); ++u)
      for (const auto& z : raw[u].second)
        if (seen.insert(z).second) {
          const auto& kept = fixed.assignments[u].scenes;
          ASSERT_NE(std::find(kept.begin(), kept.end(), z), kept.end());
        }
  }
}

TEST(PlanShots, SlotsFollowUnitKeypoints) {
  MusicUnit u;
  u.id = "U1";
  u.start = 10.0;
  u.end = 16.0;
  u.keypoints = {make_keypoint(12.0, KeypointKind::downbeat, 1.0), make_keypoint(14.5, KeypointKind::downbeat, 1.0)};
  auto provider = fixture::mock();
  auto specs = plan_shots(u, scenes(2), kInstruction, *provider);
  ASSERT_EQ(specs.size(), 3u);
  EXPECT_DOUBLE_EQ(specs[0].tau, 2.0);
  EXPECT_DOUBLE_EQ(specs[1].tau, 2.5);
  EXPECT_DOUBLE_EQ(specs[2].tau, 1.5);
  EXPECT_DOUBLE_EQ(specs[0].slot_start, 10.0);
  EXPECT_DOUBLE_EQ(specs[1].slot_start, 12.0);
  EXPECT_DOUBLE_EQ(specs[2].slot_start, 14.5);
  EXPECT_EQ(specs[0].id, "U1-P01");
  EXPECT_EQ(specs[2].id, "U1-P03");
  EXPECT_EQ(specs[0].z_id, "Z1");
  EXPECT_EQ(specs[1].z_id, "Z2");
  EXPECT_EQ(specs[2].z_id, "Z1");
  for (const auto& s : specs) {
    EXPECT_EQ(s.unit, "U1");
    EXPECT_FALSE(s.repaired);
  }
}

TEST(PlanShots, OutOfPoolSceneIsRepaired) {
  MusicUnit u;
  u.id = "U2";
  u.start = 0.0;
  u.end = 4.0;
  u.keypoints = {make_keypoint(2.0, KeypointKind::downbeat, 1.0)};
  auto [backend, provider] = fixture::scripted([](const ModelRequest&, std::size_t) {
    return Json{{"shots",
                 {{{"slot", 0}, {"scene", "Z1"}, {"description", "the first pier"}},
                  {{"slot", 1}, {"scene", "Z9"}, {"description", "Scene 2 takes place on pier 2"}}}}}
        .dump();
  });
  auto specs = plan_shots(u, scenes(2), kInstruction, *provider);
  ASSERT_EQ(specs.size(), 2u);
  EXPECT_EQ(specs[0].z_id, "Z1");
  EXPECT_FALSE(specs[0].repaired);
  EXPECT_TRUE(specs[1].repaired);
  EXPECT_EQ(specs[1].z_id, "Z2");  // nearest summary to the description
  auto reqs = backend->requests();
  ASSERT_EQ(reqs.size(), 2u);
  ASSERT_TRUE(reqs[1].context.contains("rejected"));
  EXPECT_EQ(reqs[1].context["rejected"][0]["slot"], 1);
}

TEST(PlanShots, RepromptCanFixSlot) {
  MusicUnit u;
  u.id = "U1";
  u.end = 4.0;
  u.keypoints = {make_keypoint(2.0, KeypointKind::downbeat, 1.0)};
  auto [backend, provider] = fixture::scripted([](const ModelRequest&, std::size_t call) {
    const char* second = call == 0 ? "Z7" : "Z2";
    return Json{{"shots",
                 {{{"slot", 0}, {"scene", "Z1"}, {"description", "a"}},
                  {{"slot", 1}, {"scene", second}, {"description", "b"}}}}}
        .dump();
  });
  auto specs = plan_shots(u, scenes(2), kInstruction, *provider);
  EXPECT_EQ(specs[1].z_id, "Z2");
  EXPECT_FALSE(specs[1].repaired);
  EXPECT_EQ(backend->count(Task::shot_plan), 2u);
}

TEST(PlanShots, SlotsAbutAndTileUnit) {
  std::mt19937_64 rng(5);
  auto provider = fixture::mock();
  for (int trial = 0; trial < 200; ++trial) {
    MusicUnit u;
    u.id = "U1";
    u.start = std::uniform_real_distribution<double>(0, 50)(rng);
    u.end = u.start + std::uniform_real_distribution<double>(1, 20)(rng);
    std::vector<double> ts;
    for (int k = 0, n = static_cast<int>(rng() % 8); k < n; ++k)
      ts.push_back(std::uniform_real_distribution<double>(u.start + 0.01, u.end - 0.01)(rng));
    std::sort(ts.begin(), ts.end());
    for (double t : ts) u.keypoints.push_back(make_keypoint(t, KeypointKind::downbeat, 0.5));
    auto specs = plan_shots(u, scenes(1 + rng() % 4), kInstruction, *provider);
    ASSERT_FALSE(specs.empty());
    EXPECT_DOUBLE_EQ(specs.front().slot_start, u.start);
    double sum = 0.0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      ASSERT_GT(specs[i].tau, 0.0);
      sum += specs[i].tau;
      if (i + 1 < specs.size()) ASSERT_NEAR(specs[i].slot_start + specs[i].tau, specs[i + 1].slot_start, 1e-9);
    }
    EXPECT_NEAR(sum, u.length(), 1e-9);
  }
}

TEST(PlanShots, EmptyPoolIsPrecondition) {
  MusicUnit u;
  u.id = "U1";
  u.end = 2.0;
  auto provider = fixture::mock();
  EXPECT_THROW(plan_shots(u, {}, kInstruction, *provider), PreconditionError);
}

TEST(WriteScript, SpecsStayInsideAllocation) {
  auto us = units(3, 8.0);
  for (auto& u : us) u.keypoints = {make_keypoint(u.start + 3.0, KeypointKind::downbeat, 1.0)};
  auto provider = fixture::mock();
  auto plan = write_script(us, scenes(6), kInstruction, *provider);
  ASSERT_EQ(plan.specs.size(), 6u);
  for (const auto& s : plan.specs) {
    const auto* pool = plan.allocation.proposal.scenes_for(s.unit);
    ASSERT_NE(pool, nullptr);
    EXPECT_NE(std::find(pool->begin(), pool->end(), s.z_id), pool->end()) << s.id;
  }
  Json j = plan;
  auto back = j.get<ScriptPlan>();
  EXPECT_EQ(back.specs, plan.specs);
  EXPECT_EQ(back.allocation.proposal.assignments, plan.allocation.proposal.assignments);
}
