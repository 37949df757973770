#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <string>

#include "montage/footage.hpp"
#include "montage/provider.hpp"
#include "montage/provider_mock.hpp"

namespace fixture {

/// Fresh directory under the build tree's temp area; removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("montage_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Provider over a scripted backend; no backoff so fault tests are instant.
inline std::pair<std::shared_ptr<montage::ScriptedBackend>, std::shared_ptr<montage::Provider>> scripted(
    montage::ScriptedBackend::Script script) {
  auto backend = std::make_shared<montage::ScriptedBackend>(std::move(script));
  auto provider = std::make_shared<montage::Provider>(backend, montage::RetryPolicy{3, 0.0});
  return {backend, provider};
}

inline std::shared_ptr<montage::Provider> mock(std::shared_ptr<const montage::GroundTruth> truth = nullptr) {
  return std::make_shared<montage::Provider>(std::make_shared<montage::MockBackend>(std::move(truth)),
                                             montage::RetryPolicy{3, 0.0});
}

/// Shot with `frames` keyframes on a 2 FPS grid and the given text attributes.
inline montage::Shot make_shot(const std::string& id, const std::string& source, double t_in, double t_out,
                               const std::string& env = "street") {
  montage::Shot s;
  s.id = id;
  s.source = source;
  s.t_in = t_in;
  s.t_out = t_out;
  s.attributes.environment = env;
  s.attributes.action = "walks";
  s.attributes.cinematography = "static";
  s.attributes.scale = "wide";
  s.attributes.embed();
  const auto n = static_cast<std::size_t>(std::ceil((t_out - t_in) * 2.0 - 1e-9));
  for (std::size_t k = 0; k < n; ++k) {
    montage::Keyframe kf;
    kf.t = t_in + k / 2.0;
    kf.hash = id + "#" + std::to_string(k);
    kf.luma = 0.5;
    kf.change = k == 0 ? 0.0 : 0.05;
    s.keyframes.push_back(kf);
  }
  return s;
}

/// Deconstruction with `n_scenes` scenes of `per_scene` back-to-back shots of
/// `shot_len` seconds on one source.
inline montage::Deconstruction make_footage(std::size_t n_scenes, std::size_t per_scene, double shot_len,
                                            const std::string& source = "v") {
  montage::Deconstruction d;
  double t = 0.0;
  for (std::size_t z = 0; z < n_scenes; ++z) {
    montage::Scene scene;
    scene.id = "Z" + std::to_string(z + 1);
    for (std::size_t k = 0; k < per_scene; ++k) {
      auto id = montage::shot_id(source, z * per_scene + k + 1);
      d.shots.push_back(make_shot(id, source, t, t + shot_len, "place " + std::to_string(z)));
      scene.shots.push_back(id);
      t += shot_len;
    }
    scene.summary = "Scene " + std::to_string(z + 1) + " in place " + std::to_string(z) + ".";
    scene.embedding = montage::embed_text(scene.summary);
    d.scenes.push_back(std::move(scene));
  }
  return d;
}

}  // namespace fixture
