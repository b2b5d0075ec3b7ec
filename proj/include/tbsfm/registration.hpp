#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "tbsfm/random.hpp"
#include "tbsfm/scene.hpp"

namespace tbsfm {

struct RansacParams {
  double tau = 4.0;          // inlier threshold, pixels
  int max_iterations = 10000;
  double confidence = 0.999; // eta
  int min_inliers = 15;
  int max_models = 4;        // cap on sequential poses per camera
  int refine_iterations = 10;
  uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

// One pose of a source image toward a target take, with its consensus set.
struct RegisteredPose {
  int image_id = 0;
  int source_take = 0;
  int target_take = 0;
  CameraPose pose;  // in the target take's coordinate system
  std::vector<std::pair<int, int>> inliers;  // (point_id, obs_index), sorted by obs_index

  int inlier_count() const { return static_cast<int>(inliers.size()); }
  bool has_inlier(int point_id, int obs_index) const;
};

struct Corr2D3D {
  Vec2 pixel = Vec2::Zero();
  Vec3 point = Vec3::Zero();
  int point_id = 0;
  int obs_index = 0;
};

// Minimal absolute pose from three 2D-3D matches (Grunert's equation system);
// up to four solutions, each reprojecting all three points within 1e-6 px.
// Near-collinear point triples yield no solution.
std::vector<CameraPose> p3p_minimal(const std::array<Vec2, 3>& pixels,
                                    const std::array<Vec3, 3>& points,
                                    const Intrinsics& intrinsics);

// Gauss-Newton pose polish on a fixed correspondence set.
CameraPose refine_pose(const CameraPose& initial,
                       const std::vector<Corr2D3D>& corrs,
                       int max_iterations);

// P3P RANSAC with a fourth sample point disambiguating the solution branch
// and an adaptive iteration count from the running inlier ratio. The final
// pose is refined over its inliers; empty when min_inliers is not reached.
// Throws std::invalid_argument when fewer than four correspondences are given.
std::optional<RegisteredPose> pnp_ransac(const std::vector<Corr2D3D>& corrs,
                                         const Intrinsics& intrinsics,
                                         const RansacParams& params,
                                         Rng& rng);

// Sequential RANSAC: repeatedly fits a pose and removes its inliers, one pose
// per rigid object, until fitting fails or max_models is reached.
std::vector<RegisteredPose> sequential_register(const MultiTakeScene& scene,
                                                int image_id,
                                                int target_take,
                                                const RansacParams& params);

struct Registration {
  // (image_id, target_take) -> poses found, strongest first.
  std::map<std::pair<int, int>, std::vector<RegisteredPose>> poses;

  const std::vector<RegisteredPose>* find(int image_id, int target_take) const;
};

// Registers every image toward every other take. Each (image, take) task uses
// its own seeded random stream, so the result is independent of thread count.
Registration register_all(const MultiTakeScene& scene, const RansacParams& params,
                          int threads = 1);

void save_registration(const Registration& reg, const std::filesystem::path& path);
Registration load_registration(const std::filesystem::path& path);
// Restores source takes and intrinsics that the dump format does not carry.
void attach_scene_info(Registration& reg, const MultiTakeScene& scene);

}  // namespace tbsfm
