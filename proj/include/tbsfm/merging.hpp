#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tbsfm/registration.hpp"
#include "tbsfm/scene.hpp"
#include "tbsfm/segmentation.hpp"
#include "tbsfm/tracks.hpp"

namespace tbsfm {

class DegenerateConfiguration : public std::runtime_error {
 public:
  explicit DegenerateConfiguration(const std::string& what) : std::runtime_error(what) {}
};

// Least-squares similarity mapping src onto dst: min sum |dst - (s B src + b)|^2.
// Closed form: centroid subtraction, SVD of the 3x3 covariance with reflection
// fix, scale from the variance ratio. Throws DegenerateConfiguration for fewer
// than 3 or collinear points.
SimilarityTransform similarity_from_points(std::span<const Vec3> src, std::span<const Vec3> dst);

// Same alignment with the scale fixed to 1.
RigidMotion rigid_from_points(std::span<const Vec3> src, std::span<const Vec3> dst);

// One physical camera: its pose in the source system and the registered pose
// of the same camera in the target system.
struct CameraPosePair {
  CameraPose native;      // in delta_s
  CameraPose registered;  // in delta_t
};

struct CameraPairSimilarity {
  SimilarityTransform transform;  // delta_s -> delta_t
  bool translation_valid = false; // one pair determines the rotation only
};

// Similarity between two reconstructions from registered camera pairs:
// B = (R^o)^-1 R_native per pair, averaged by the chordal mean; translation
// and scale from the stacked linear system, solvable with two or more pairs.
CameraPairSimilarity similarity_from_camera_pair(std::span<const CameraPosePair> pairs);

// Which object a pose was registered toward. kBoth covers a camera posed in
// its own take, where the two objects are consistent.
enum class RegisteredObject { kBoth, kBackground, kForeground };

// Everything needed to move models and cameras into the reference frame.
struct MergePlan {
  int reference_take = 0;
  std::map<int, SimilarityTransform> background_sim;  // take -> delta_t -> delta_r
  std::map<int, SimilarityTransform> foreground_sim;
  std::map<int, RigidMotion> motions;  // take -> foreground motion r -> t, in delta_r
};

class UnresolvableCamera : public std::runtime_error {
 public:
  explicit UnresolvableCamera(const std::string& what) : std::runtime_error(what) {}
};

// Points mapped X -> s B X + b; camera poses transported along.
TakeModel transform_model(const TakeModel& take, const SimilarityTransform& transform);

// Transforms a camera pose into the reference frame and splits it into its
// background and foreground poses. `system_take` is the coordinate system the
// pose lives in (the take it was registered toward, or its own), `camera_take`
// the take the physical camera belongs to.
std::pair<CameraPose, CameraPose> transform_camera(const CameraPose& pose,
                                                   int system_take,
                                                   int camera_take,
                                                   RegisteredObject object,
                                                   const MergePlan& plan);

struct MergedPoint {
  Vec3 position = Vec3::Zero();
  Label label = Label::kUnknown;
};

struct MergedCamera {
  int image_id = 0;
  int take_id = 0;
  CameraPose background_pose;
  CameraPose foreground_pose;
};

struct MergedObservation {
  int camera_index = 0;  // into LabeledScene::cameras
  Vec2 pixel = Vec2::Zero();
  int track_id = 0;
};

// The merged two-body model in the reference frame, with per-track labels and
// the per-take foreground motions.
struct LabeledScene {
  int reference_take = 0;
  std::map<int, MergedPoint> points;  // track_id ->
  std::vector<MergedCamera> cameras;  // sorted by image_id
  std::vector<MergedObservation> observations;
  std::map<int, RigidMotion> foreground_motions;  // take -> (A_{r,t}, a) in delta_r
  std::vector<int> excluded_takes;
  std::vector<std::string> warnings;

  double scene_diameter() const;  // bounding-box diagonal of the merged points
};

struct MergeOptions {
  double tau = 4.0;  // link verification threshold for observation-track association
  // Rotation discrepancy between the point and camera-pair similarity
  // estimates that triggers a consistency warning.
  double cross_check_tolerance = 1e-3;
};

// Estimates per-take similarities from background tracks (camera pairs as
// cross-check and fallback), transports points and cameras into delta_r, and
// fuses duplicate track members to their centroid. Takes without usable
// correspondences are excluded and reported.
LabeledScene merge_scene(const MultiTakeScene& scene,
                         const GlobalGroups& groups,
                         const std::vector<Track>& tracks,
                         const std::map<int, Label>& labels,
                         const Registration* registration = nullptr,
                         const MergeOptions& options = {});

void save_merged(const LabeledScene& merged, const std::filesystem::path& dir);
LabeledScene load_merged(const std::filesystem::path& dir);

// Applies one similarity to every element of the merged scene (points, both
// camera poses, conjugated motions). Reprojection residuals are unchanged.
LabeledScene transform_labeled_scene(const LabeledScene& merged, const SimilarityTransform& s);

}  // namespace tbsfm
