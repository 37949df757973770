#pragma once

#include <string>
#include <vector>

#include "montage/audio_parse.hpp"
#include "montage/core.hpp"
#include "montage/footage.hpp"

namespace montage {

class Provider;

struct UnitAssignment {
  std::string unit;
  std::vector<std::string> scenes;
  bool operator==(const UnitAssignment&) const = default;
};

struct AllocationProposal {
  /// In unit order.
  std::vector<UnitAssignment> assignments;
  std::string storyline;

  const std::vector<std::string>* scenes_for(const std::string& unit) const;
};

enum class AllocationViolationKind { shared_scene, empty_unit };

struct AllocationViolation {
  AllocationViolationKind kind = AllocationViolationKind::shared_scene;
  std::string scene;
  /// For shared_scene: the two units (in unit order). For empty_unit: first.
  std::string first_unit;
  std::string second_unit;

  bool operator==(const AllocationViolation&) const = default;
};

/// Every (scene, unit pair) sharing, in unit-pair order, then every empty unit.
std::vector<AllocationViolation> validate_allocation(const AllocationProposal& p);

/// Drops repeated scene ids, keeping each one in the first unit (and first
/// position) where it appears.
AllocationProposal repair_allocation(AllocationProposal p);

struct AllocationConfig {
  int max_regenerations = 2;
};

struct AllocationResult {
  AllocationProposal proposal;
  int regenerations = 0;
  bool repaired = false;
};

/// Throws UserError when there are fewer scenes than units and
/// UnrecoverableSpecError when a unit is still empty after repair.
AllocationResult allocate_scenes(const std::vector<MusicUnit>& units, const std::vector<Scene>& scenes,
                                 const Instruction& instruction, const Provider& provider,
                                 const AllocationConfig& config = {});

struct ShotSpec {
  std::string id;
  std::string unit;
  Seconds tau = 0.0;
  std::string z_id;
  std::string description;
  Seconds slot_start = 0.0;
  /// z_id came from the nearest-summary fallback rather than the model.
  bool repaired = false;

  bool operator==(const ShotSpec&) const = default;
};

/// One spec per slot of the unit's keypoint grid; tau is the slot length.
std::vector<ShotSpec> plan_shots(const MusicUnit& unit, const std::vector<Scene>& assigned,
                                 const Instruction& instruction, const Provider& provider);

struct ScriptPlan {
  AllocationResult allocation;
  std::vector<ShotSpec> specs;
};

/// Allocation followed by per-unit planning (units run concurrently).
ScriptPlan write_script(const std::vector<MusicUnit>& units, const std::vector<Scene>& scenes,
                        const Instruction& instruction, const Provider& provider,
                        const AllocationConfig& config = {}, std::size_t workers = 4);

void to_json(Json& j, const AllocationProposal& p);
void from_json(const Json& j, AllocationProposal& p);
void to_json(Json& j, const ShotSpec& s);
void from_json(const Json& j, ShotSpec& s);
void to_json(Json& j, const ScriptPlan& p);
void from_json(const Json& j, ScriptPlan& p);

}  // namespace montage
