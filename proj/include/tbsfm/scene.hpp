#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tbsfm/geometry.hpp"

namespace tbsfm {

// One image feature with the per-take 3D points it corresponds to.
// An empty link list marks an unmatched feature. Take ids within the
// links are unique.
struct Observation {
  Vec2 pixel = Vec2::Zero();
  std::vector<std::pair<int, int>> links;  // (take_id, point_id)
};

// Unit quaternion exactly as stored on disk. Keeping the four numbers verbatim
// makes save/load a bitwise identity; the rotation matrix is derived on demand.
struct QuatRotation {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  static QuatRotation from_rotation(const Rotation3& r);
  Rotation3 rotation() const;
};

struct TakeImage {
  int image_id = 0;
  int camera_id = 0;
  QuatRotation rotation;  // world(delta_t) -> camera
  Vec3 center = Vec3::Zero();
  std::vector<Observation> observations;
};

// One take's reconstruction in its own coordinate system delta_t.
struct TakeModel {
  int take_id = 0;
  std::map<int, Intrinsics> cameras;  // camera_id -> K
  std::map<int, Vec3> points;         // point_id -> X
  std::vector<TakeImage> images;      // sorted by image_id

  CameraPose pose(const TakeImage& image) const;
  const TakeImage* find_image(int image_id) const;
};

struct MultiTakeScene {
  std::vector<TakeModel> takes;  // sorted by take_id

  const TakeModel* find_take(int take_id) const;
  const TakeModel& take(int take_id) const;
  // Image ids are unique across takes; returns {take, image} or {nullptr, nullptr}.
  std::pair<const TakeModel*, const TakeImage*> find_image(int image_id) const;
  int image_count() const;
};

enum class Label { kBackground, kForeground, kUnknown };

char label_code(Label label);
Label label_from_code(char code);
Label swap_label(Label label);

// Evaluation-only generative record written by the simulator.
struct GroundTruth {
  struct MotionRecord {
    QuatRotation rotation;
    Vec3 translation = Vec3::Zero();
  };
  struct SimilarityRecord {
    QuatRotation rotation;
    Vec3 translation = Vec3::Zero();
    double scale = 1.0;
  };

  std::map<std::pair<int, int>, Label> labels;   // (take_id, point_id) -> B/F
  std::map<int, MotionRecord> motions;           // take -> foreground motion in the world frame
  std::map<int, SimilarityRecord> take_to_world; // take -> similarity delta_t -> delta

  RigidMotion motion(int take_id) const;
  SimilarityTransform world_from_take(int take_id) const;
  SimilarityTransform take_from_world(int take_id) const;
};

// 2D-3D matches of one image against the model of target_take, read off the
// observation links. obs_index identifies the observation within the image.
struct ImageCorrespondence {
  Vec2 pixel = Vec2::Zero();
  int point_id = 0;
  int obs_index = 0;
};

std::vector<ImageCorrespondence> correspondences(const MultiTakeScene& scene,
                                                 int image_id,
                                                 int target_take);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::filesystem::path& file, int line, const std::string& what);
};

MultiTakeScene load_scene(const std::filesystem::path& dir);
void save_scene(const MultiTakeScene& scene, const std::filesystem::path& dir);

std::optional<GroundTruth> load_ground_truth(const std::filesystem::path& dir);
void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& dir);

namespace io {
// Fixed 17-significant-digit formatting: parses back to the same double and
// keeps dumps byte-stable across runs.
std::string format_double(double v);
}  // namespace io

}  // namespace tbsfm
