#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tbsfm/scene.hpp"

namespace tbsfm {

// Synthetic semidynamic two-body scene: a static textured background plane and
// a foreground object that moves rigidly between takes. Each take is handed
// out in its own scrambled coordinate system, like an independent per-take
// reconstruction would be.
struct SimConfig {
  uint64_t seed = 0;
  int takes = 4;
  int background_points = 500;
  int foreground_points = 200;
  int cameras_per_take = 10;
  double pixel_noise_sigma = 0.0;            // pixels
  double outlier_fraction = 0.0;             // fraction of links rewired
  double visibility_fraction = 0.85;         // per camera-point keep probability
  double foreground_rotation_magnitude = 0.4;    // radians
  double foreground_translation_magnitude = 0.5; // scene units
  bool scramble = true;                      // random per-take similarity
  int image_width = 1600;
  int image_height = 1200;

  void validate() const;  // throws std::invalid_argument
};

SimConfig load_sim_config(const std::filesystem::path& json_path);

struct SimResult {
  MultiTakeScene scene;
  GroundTruth ground_truth;
  std::vector<std::string> warnings;
};

SimResult generate(const SimConfig& config);

}  // namespace tbsfm
