#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tbsfm/merging.hpp"
#include "tbsfm/random.hpp"
#include "tbsfm/scene.hpp"
#include "tbsfm/simulator.hpp"

namespace tbsfm::test {

inline Vec3 random_unit(Rng& rng) {
  while (true) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    if (v.norm() > 1e-6) {
      return v.normalized();
    }
  }
}

inline Rotation3 random_rotation(Rng& rng) {
  return Rotation3::from_quaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal());
}

inline RigidMotion random_motion(Rng& rng, double max_angle = 3.0, double max_shift = 2.0) {
  return {Rotation3::from_axis_angle(rng.uniform(0.0, max_angle) * random_unit(rng)),
          rng.uniform(0.0, max_shift) * random_unit(rng)};
}

inline SimilarityTransform random_similarity(Rng& rng) {
  return {random_rotation(rng),
          {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)},
          rng.uniform(0.5, 2.0)};
}

// A camera somewhere on a shell around the origin, looking inward, so that
// points near the origin are in front of it.
inline CameraPose random_inward_pose(Rng& rng) {
  const Vec3 center = rng.uniform(4.0, 7.0) * random_unit(rng);
  const Vec3 forward = (-center).normalized();
  Vec3 helper = std::abs(forward.z()) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  const Vec3 right = helper.cross(forward).normalized();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = forward;
  return {{1200.0, 1200.0, 800.0, 600.0}, Rotation3::from_matrix(r), center};
}

// Ground-truth gauge and motion layout of a multi-take world; the source of
// forward-constructed oracles for registered poses and camera transforms.
struct WorldFixture {
  int reference_take = 1;
  std::vector<SimilarityTransform> take_from_world;  // S_t, world -> delta_t; index take-1
  std::vector<RigidMotion> motions;                  // M_t, initial config -> take t config

  int take_count() const { return static_cast<int>(motions.size()); }
  const SimilarityTransform& gauge(int take_id) const {
    return take_from_world[static_cast<size_t>(take_id - 1)];
  }
  const RigidMotion& world_motion(int take_id) const {
    return motions[static_cast<size_t>(take_id - 1)];
  }

  MergePlan plan() const {
    MergePlan plan;
    plan.reference_take = reference_take;
    const SimilarityTransform& s_r = gauge(reference_take);
    const RigidMotion& m_r = world_motion(reference_take);
    for (int t = 1; t <= take_count(); ++t) {
      plan.background_sim[t] = compose_similarity(gauge(t), s_r);
      // sim_F = S_r o (M_r M_t^-1) o S_t^-1.
      plan.foreground_sim[t] = chain_similarity(
          chain_similarity_motion(s_r, compose_motion(world_motion(t), m_r)),
          invert_similarity(gauge(t)));
      plan.motions[t] = motion_in_frame(compose_motion(m_r, world_motion(t)), s_r);
    }
    return plan;
  }

  // Pose of a camera (with world pose `world`, belonging to `camera_take`)
  // registered toward `object` of `system_take`, in that take's system.
  CameraPose registered_pose(const CameraPose& world, int camera_take, int system_take,
                             RegisteredObject object) const {
    if (object == RegisteredObject::kForeground) {
      // The camera sees the foreground at its own take's configuration; the
      // target model holds it at the system take's configuration.
      const RigidMotion seen_to_model =
          compose_motion(world_motion(camera_take), world_motion(system_take));
      return transform_pose(world, chain_similarity_motion(gauge(system_take), seen_to_model));
    }
    return transform_pose(world, gauge(system_take));
  }

  // Expected background and foreground poses in delta_r.
  std::pair<CameraPose, CameraPose> expected_poses(const CameraPose& world,
                                                   int camera_take) const {
    return {registered_pose(world, camera_take, reference_take, RegisteredObject::kBackground),
            registered_pose(world, camera_take, reference_take, RegisteredObject::kForeground)};
  }
};

inline WorldFixture random_world(Rng& rng, int takes) {
  WorldFixture world;
  world.motions.push_back(RigidMotion{});  // take 1 is the initial configuration
  world.take_from_world.push_back(random_similarity(rng));
  for (int t = 2; t <= takes; ++t) {
    world.motions.push_back(random_motion(rng, 0.6, 1.0));
    world.take_from_world.push_back(random_similarity(rng));
  }
  return world;
}

inline double pose_distance(const CameraPose& a, const CameraPose& b) {
  return rotation_geodesic_distance(a.rotation, b.rotation) + (a.center - b.center).norm();
}

inline std::filesystem::path make_temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("tbsfm_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream stream(path, std::ios::binary);
  std::ostringstream out;
  out << stream.rdbuf();
  return out.str();
}

// Recursive byte comparison of two directories.
inline bool directories_identical(const std::filesystem::path& a,
                                  const std::filesystem::path& b,
                                  std::string* difference = nullptr) {
  namespace fs = std::filesystem;
  std::vector<fs::path> rel_a;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (entry.is_regular_file()) {
      rel_a.push_back(fs::relative(entry.path(), a));
    }
  }
  std::vector<fs::path> rel_b;
  for (const auto& entry : fs::recursive_directory_iterator(b)) {
    if (entry.is_regular_file()) {
      rel_b.push_back(fs::relative(entry.path(), b));
    }
  }
  std::sort(rel_a.begin(), rel_a.end());
  std::sort(rel_b.begin(), rel_b.end());
  if (rel_a != rel_b) {
    if (difference != nullptr) {
      *difference = "file lists differ";
    }
    return false;
  }
  for (const fs::path& rel : rel_a) {
    if (read_file(a / rel) != read_file(b / rel)) {
      if (difference != nullptr) {
        *difference = "content differs: " + rel.string();
      }
      return false;
    }
  }
  return true;
}

}  // namespace tbsfm::test
