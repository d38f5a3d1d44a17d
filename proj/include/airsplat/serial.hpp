// JSON serialization of configs, poses, scenes and debug dumps, plus the
// experiment config bundle consumed by the CLI.

#pragma once

#include <string>

#include "json.hpp"

#include "airsplat/oracles.hpp"
#include "airsplat/render.hpp"
#include "airsplat/scene.hpp"
#include "airsplat/trainer.hpp"

namespace airsplat {

using Json = nlohmann::json;

// Everything a reproducible run needs. Section seeds default to values
// derived from the master seed; explicit "seed" keys override.
struct ExperimentConfig {
  SceneConfig scene;
  uint64_t scene_seed = 0;
  DriftModel drift;
  TeacherNoise teacher;
  TrainConfig train;
  std::string output_dir = "runs/out";
};

// Poses serialize as 4x4 row-major homogeneous matrices (16 numbers).
Json pose_to_json(const RigidPose& pose);
RigidPose pose_from_json(const Json& j);

Json camera_to_json(const Camera& cam);
Camera camera_from_json(const Json& j);

Json scene_config_to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const Json& j);

Json drift_to_json(const DriftModel& d);
DriftModel drift_from_json(const Json& j);

Json teacher_to_json(const TeacherNoise& t);
TeacherNoise teacher_from_json(const Json& j);

Json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j);

Json experiment_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const Json& j);

Json scene_to_json(const Scene& scene, const SceneConfig& cfg, uint64_t seed);
Scene scene_from_json(const Json& j);

Json render_target_debug_json(const RenderTarget& rt);

// File helpers.
Json load_json(const std::string& path);
void save_json(const Json& j, const std::string& path);

}  // namespace airsplat
