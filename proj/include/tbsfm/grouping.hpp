#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "tbsfm/registration.hpp"
#include "tbsfm/scene.hpp"

namespace tbsfm {

enum class MotionClass {
  kExempt,    // motion criterion not applied to this pair
  kForward,   // pair ordered (background, foreground)
  kBackward,  // pair ordered (foreground, background)
  kOther,     // zero motion or unclustered estimate
};

// Two sequential poses of one source image toward the same take, with the
// point-id sets their inliers observe. Sets grow by union as pairs merge.
struct PosePair {
  RegisteredPose first;   // larger consensus set
  RegisteredPose second;
  std::vector<int> set1;  // sorted unique point ids in the target take
  std::vector<int> set2;
  int support = 1;        // number of source cameras merged into this pair
  MotionClass motion_class = MotionClass::kExempt;
};

struct TakeGroupPair {
  int take_id = 0;
  std::vector<int> group1;  // sorted point ids
  std::vector<int> group2;
  int support = 0;
  bool degenerate = false;  // one side nearly empty
};

struct LinkageOptions {
  // A constraint intersection must stay below this fraction of the smaller of
  // the two sets it compares.
  double threshold_fraction = 0.02;
  bool motion_criterion = false;
  double zero_rotation_tolerance = 1e-2;     // radians
  double zero_translation_fraction = 1e-2;   // of the scene scale
  double cluster_rotation_tolerance = 0.05;  // radians
  double cluster_translation_fraction = 0.02;
};

// All ordered 2-combinations of each source image's sequential poses toward
// take_t, the stronger pose first.
std::vector<PosePair> extract_pose_pairs(const Registration& registration, int take_t);

struct LinkageMerge {
  size_t dst = 0;
  size_t src = 0;
  bool crossed = false;
  int value = 0;
};

// One greedy merge of the best admissible pair combination under the straight
// and crossed intersection criteria; empty when nothing merges.
std::optional<LinkageMerge> linkage_step(std::vector<PosePair>& pairs,
                                         const LinkageOptions& options);

// Runs the linkage to a fixpoint and keeps the pair merged from the most
// cameras. Requires at least one pair.
TakeGroupPair group_take(int take_t, std::vector<PosePair> pairs, const LinkageOptions& options);

// Foreground motion from a pose pair of one camera: A = (R^B)^-1 R^F,
// a = c^B - A c^F, expressed in the registered take's coordinate system.
RigidMotion foreground_motion_from_pair(const CameraPose& pose_background,
                                        const CameraPose& pose_foreground);

struct MotionClusters {
  bool enabled = false;  // false when fewer than two non-zero motions exist
  std::vector<size_t> forward;
  std::vector<size_t> backward;
  std::vector<size_t> zero;
  std::vector<size_t> outliers;
};

// Clusters pair motions for one (source take, target take) slice: zero
// motions are removed first, the rest is grouped by consensus in
// (axis-angle, translation) space, and the two largest clusters become the
// forward and backward motion.
MotionClusters motion_cluster(const std::vector<PosePair>& pairs,
                              const LinkageOptions& options,
                              double scene_scale);

// Tags pairs with their motion class per (source take, target take) slice.
void apply_motion_criterion(std::vector<PosePair>& pairs,
                            const LinkageOptions& options,
                            double scene_scale);

// Bounding-box diagonal of the take's points; the scale reference for motion
// tolerances.
double take_scene_scale(const TakeModel& take);

struct GroupingResult {
  std::vector<TakeGroupPair> groups;             // one per successfully grouped take
  std::vector<std::pair<int, std::string>> failures;  // take -> reason
  // Mean cluster motions per (source take, target take); only filled when the
  // motion criterion ran.
  struct MotionEstimate {
    int source_take = 0;
    int target_take = 0;
    RigidMotion motion;
  };
  std::vector<MotionEstimate> motions;
};

GroupingResult group_all(const MultiTakeScene& scene,
                         const Registration& registration,
                         const LinkageOptions& options);

void save_groups(const GroupingResult& result, const std::filesystem::path& path);
GroupingResult load_groups(const std::filesystem::path& path);

}  // namespace tbsfm
