#pragma once

#include <memory>
#include <optional>

#include "montage/provider.hpp"
#include "montage/sidecar.hpp"

namespace montage {

/// Offline backend. Replies are a pure function of (task, context,
/// attachment hashes) plus the optional ground-truth sidecar: sidecar facts
/// are passed through, anything else is templated from a content hash.
class MockBackend : public Backend {
 public:
  explicit MockBackend(std::shared_ptr<const GroundTruth> truth = nullptr)
      : truth_(std::move(truth)) {}

  std::string id() const override { return "mock"; }
  std::string send(const ModelRequest& request) override;

 private:
  Json shot_caption(const ModelRequest& r) const;
  Json scene_summary(const ModelRequest& r) const;
  Json identity_inference(const ModelRequest& r) const;
  Json music_structure(const ModelRequest& r) const;
  Json music_caption(const ModelRequest& r) const;
  Json allocation(const ModelRequest& r) const;
  Json shot_plan(const ModelRequest& r) const;
  Json identity_check(const ModelRequest& r) const;
  Json quality_check(const ModelRequest& r) const;
  Json trim_feedback(const ModelRequest& r) const;

  std::shared_ptr<const GroundTruth> truth_;
};

/// Replaces anonymous mentions with rostered names for every truth character
/// whose identity is in `roster`.
std::string ground_mentions(std::string text, const std::vector<TruthCharacter>& characters,
                            const std::vector<CharacterIdentity>& roster);

}  // namespace montage
