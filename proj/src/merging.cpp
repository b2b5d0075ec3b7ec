#include "tbsfm/merging.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tbsfm/text_io.hpp"

namespace tbsfm {
namespace {

Rotation3 chordal_mean(const std::vector<Rotation3>& rotations) {
  Mat3 sum = Mat3::Zero();
  for (const Rotation3& r : rotations) {
    sum += r.matrix();
  }
  return Rotation3::project_to_rotation(sum);
}

}  // namespace

SimilarityTransform similarity_from_points(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) {
    throw std::invalid_argument("point lists differ in size");
  }
  const size_t n = src.size();
  if (n < 3) {
    throw DegenerateConfiguration("similarity needs at least 3 correspondences, got " +
                                  std::to_string(n));
  }
  Vec3 src_centroid = Vec3::Zero();
  Vec3 dst_centroid = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    src_centroid += src[i];
    dst_centroid += dst[i];
  }
  src_centroid /= static_cast<double>(n);
  dst_centroid /= static_cast<double>(n);

  Mat3 covariance = Mat3::Zero();
  double src_variance = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Vec3 s = src[i] - src_centroid;
    const Vec3 d = dst[i] - dst_centroid;
    covariance += d * s.transpose();
    src_variance += s.squaredNorm();
  }
  covariance /= static_cast<double>(n);
  src_variance /= static_cast<double>(n);

  Eigen::JacobiSVD<Mat3> svd(covariance, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(src_variance > 0.0) || sv(1) <= 1e-12 * std::max(sv(0), 1e-300)) {
    throw DegenerateConfiguration("point configuration is collinear or degenerate");
  }
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  const Rotation3 rotation =
      Rotation3::project_to_rotation(svd.matrixU() * d * svd.matrixV().transpose());
  const double scale = (sv(0) * d(0, 0) + sv(1) * d(1, 1) + sv(2) * d(2, 2)) / src_variance;
  if (!(scale > 0.0)) {
    throw DegenerateConfiguration("recovered scale is not positive");
  }
  return {rotation, dst_centroid - scale * (rotation * src_centroid), scale};
}

RigidMotion rigid_from_points(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) {
    throw std::invalid_argument("point lists differ in size");
  }
  const size_t n = src.size();
  if (n < 3) {
    throw DegenerateConfiguration("rigid alignment needs at least 3 correspondences, got " +
                                  std::to_string(n));
  }
  Vec3 src_centroid = Vec3::Zero();
  Vec3 dst_centroid = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    src_centroid += src[i];
    dst_centroid += dst[i];
  }
  src_centroid /= static_cast<double>(n);
  dst_centroid /= static_cast<double>(n);

  Mat3 covariance = Mat3::Zero();
  for (size_t i = 0; i < n; ++i) {
    covariance += (dst[i] - dst_centroid) * (src[i] - src_centroid).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(covariance, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(1) <= 1e-12 * std::max(svd.singularValues()(0), 1e-300)) {
    throw DegenerateConfiguration("point configuration is collinear or degenerate");
  }
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  const Rotation3 rotation =
      Rotation3::project_to_rotation(svd.matrixU() * d * svd.matrixV().transpose());
  return {rotation, dst_centroid - rotation * src_centroid};
}

CameraPairSimilarity similarity_from_camera_pair(std::span<const CameraPosePair> pairs) {
  if (pairs.empty()) {
    throw std::invalid_argument("no camera pairs given");
  }
  // B = (R^o)^-1 R_native per pair, averaged over pairs.
  std::vector<Rotation3> estimates;
  estimates.reserve(pairs.size());
  for (const CameraPosePair& pair : pairs) {
    estimates.push_back(pair.registered.rotation.inverse() * pair.native.rotation);
  }
  CameraPairSimilarity result;
  result.transform.rotation = chordal_mean(estimates);

  if (pairs.size() < 2) {
    // One pair leaves translation and scale underdetermined.
    result.translation_valid = false;
    return result;
  }

  // Stack per pair: [R^o | R_n c_n] [b; beta] = R^o c^o.
  Eigen::MatrixXd a(3 * static_cast<int>(pairs.size()), 4);
  Eigen::VectorXd rhs(3 * static_cast<int>(pairs.size()));
  for (size_t i = 0; i < pairs.size(); ++i) {
    const Mat3 r_reg = pairs[i].registered.rotation.matrix();
    const Vec3 rn_cn = pairs[i].native.rotation * pairs[i].native.center;
    a.block<3, 3>(3 * static_cast<int>(i), 0) = r_reg;
    a.block<3, 1>(3 * static_cast<int>(i), 3) = rn_cn;
    rhs.segment<3>(3 * static_cast<int>(i)) = r_reg * pairs[i].registered.center;
  }
  const Eigen::Vector4d solution = a.colPivHouseholderQr().solve(rhs);
  result.transform.translation = solution.head<3>();
  result.transform.scale = solution(3);
  result.translation_valid = result.transform.scale > 0.0;
  if (!result.translation_valid) {
    result.transform.translation = Vec3::Zero();
    result.transform.scale = 1.0;
  }
  return result;
}

TakeModel transform_model(const TakeModel& take, const SimilarityTransform& transform) {
  TakeModel out = take;
  for (auto& [point_id, position] : out.points) {
    position = transform.apply(position);
  }
  for (TakeImage& image : out.images) {
    const CameraPose pose = take.pose(*take.find_image(image.image_id));
    const CameraPose moved = transform_pose(pose, transform);
    image.rotation = QuatRotation::from_rotation(moved.rotation);
    image.center = moved.center;
  }
  return out;
}

std::pair<CameraPose, CameraPose> transform_camera(const CameraPose& pose,
                                                   int system_take,
                                                   int camera_take,
                                                   RegisteredObject object,
                                                   const MergePlan& plan) {
  const auto similarity_for = [&](const std::map<int, SimilarityTransform>& sims,
                                  const char* kind) -> const SimilarityTransform& {
    const auto it = sims.find(system_take);
    if (it == sims.end()) {
      throw UnresolvableCamera("no " + std::string(kind) + " similarity for take " +
                               std::to_string(system_take));
    }
    return it->second;
  };
  const auto motion_it = plan.motions.find(camera_take);
  if (motion_it == plan.motions.end()) {
    throw UnresolvableCamera("no foreground motion for take " + std::to_string(camera_take));
  }
  const RigidMotion& motion = motion_it->second;  // r -> camera_take, in delta_r

  CameraPose background;
  if (object == RegisteredObject::kForeground) {
    // Transport into delta_r; the result observes the foreground at its
    // reference position, i.e. it is the foreground pose.
    CameraPose foreground = system_take == plan.reference_take
                                ? pose
                                : transform_pose(pose, similarity_for(plan.foreground_sim,
                                                                      "foreground"));
    // Foreground -> background pose: the camera follows the object's motion.
    background.intrinsics = foreground.intrinsics;
    background.rotation = foreground.rotation * motion.rotation.inverse();
    background.center = motion.apply(foreground.center);
  } else {
    background = system_take == plan.reference_take
                     ? pose
                     : transform_pose(pose, similarity_for(plan.background_sim, "background"));
  }

  // Background -> foreground pose.
  CameraPose foreground;
  foreground.intrinsics = background.intrinsics;
  foreground.rotation = background.rotation * motion.rotation;
  foreground.center = invert_motion(motion).apply(background.center);
  return {background, foreground};
}

double LabeledScene::scene_diameter() const {
  if (points.empty()) {
    return 0.0;
  }
  Vec3 lo = points.begin()->second.position;
  Vec3 hi = lo;
  for (const auto& [track_id, point] : points) {
    lo = lo.cwiseMin(point.position);
    hi = hi.cwiseMax(point.position);
  }
  return (hi - lo).norm();
}

namespace {

struct TrackAccumulator {
  std::vector<Vec3> contributions;
};

// Majority track of an observation among its verified links; -1 when nothing
// verifies.
int observation_track(const MultiTakeScene& scene,
                      const Registration* registration,
                      const TakeModel& take,
                      const TakeImage& image,
                      int obs_index,
                      const std::map<std::pair<int, int>, int>& membership,
                      double tau) {
  const Observation& obs = image.observations[static_cast<size_t>(obs_index)];
  std::map<int, int> votes;
  for (const auto& link : obs.links) {
    const auto member = membership.find(link);
    if (member == membership.end()) {
      continue;
    }
    bool verified = false;
    if (registration != nullptr) {
      verified = link_verified(scene, *registration, take, image, obs_index, link, tau);
    } else {
      // Without registrations only the take's own reconstruction is trusted.
      if (link.first == take.take_id) {
        const auto it = take.points.find(link.second);
        if (it != take.points.end()) {
          const auto reproj = try_project(take.pose(image), it->second);
          verified = reproj.has_value() && (*reproj - obs.pixel).norm() < tau;
        }
      }
    }
    if (verified) {
      ++votes[member->second];
    }
  }
  if (votes.empty()) {
    return -1;
  }
  int best_track = -1;
  int best_votes = 0;
  int native_track = -1;
  for (const auto& link : obs.links) {
    if (link.first == take.take_id) {
      const auto member = membership.find(link);
      if (member != membership.end()) {
        native_track = member->second;
      }
    }
  }
  for (const auto& [track_id, count] : votes) {
    if (count > best_votes || (count == best_votes && track_id == native_track)) {
      best_track = track_id;
      best_votes = count;
    }
  }
  return best_track;
}

}  // namespace

LabeledScene merge_scene(const MultiTakeScene& scene,
                         const GlobalGroups& groups,
                         const std::vector<Track>& tracks,
                         const std::map<int, Label>& labels,
                         const Registration* registration,
                         const MergeOptions& options) {
  LabeledScene merged;
  merged.reference_take = groups.reference_take;
  const std::map<std::pair<int, int>, int> membership = track_membership(tracks);

  const auto label_of = [&](int track_id) {
    const auto it = labels.find(track_id);
    return it == labels.end() ? Label::kUnknown : it->second;
  };

  MergePlan plan;
  plan.reference_take = groups.reference_take;
  plan.background_sim[groups.reference_take] = SimilarityTransform{};
  plan.foreground_sim[groups.reference_take] = SimilarityTransform{};
  plan.motions[groups.reference_take] = RigidMotion{};

  // Track positions accumulated in delta_r, per label-dependent transport.
  std::map<int, TrackAccumulator> accumulators;
  std::set<int> merged_takes;

  // take -> track -> point ids of that take.
  std::map<int, std::map<int, std::vector<int>>> members_by_take;
  for (const Track& track : tracks) {
    for (const auto& [member_take, point_id] : track.members) {
      members_by_take[member_take][track.track_id].push_back(point_id);
    }
  }
  const auto take_members =
      [&](int take_id) -> const std::map<int, std::vector<int>>& {
    static const std::map<int, std::vector<int>> empty;
    const auto it = members_by_take.find(take_id);
    return it == members_by_take.end() ? empty : it->second;
  };

  const auto current_centroid = [&](int track_id) -> std::optional<Vec3> {
    const auto it = accumulators.find(track_id);
    if (it == accumulators.end() || it->second.contributions.empty()) {
      return std::nullopt;
    }
    Vec3 sum = Vec3::Zero();
    for (const Vec3& p : it->second.contributions) {
      sum += p;
    }
    return sum / static_cast<double>(it->second.contributions.size());
  };

  // Reference-take points of the two global groups; classifies which object a
  // registered pose observed. Group 1 holds the background by assumption.
  std::set<int> reference_group1_points;
  std::set<int> reference_group2_points;
  for (const Track& track : tracks) {
    const bool in_g1 =
        std::binary_search(groups.group1.begin(), groups.group1.end(), track.track_id);
    const bool in_g2 =
        std::binary_search(groups.group2.begin(), groups.group2.end(), track.track_id);
    if (!in_g1 && !in_g2) {
      continue;
    }
    for (const auto& [member_take, point_id] : track.members) {
      if (member_take == groups.reference_take) {
        (in_g1 ? reference_group1_points : reference_group2_points).insert(point_id);
      }
    }
  }

  struct ClassifiedPosePair {
    CameraPose native;      // in delta_t
    CameraPose background;  // in delta_r
    CameraPose foreground;  // in delta_r
  };
  // Pose pairs of one take's cameras toward the reference take, the two poses
  // told apart by which global group their inliers fall into.
  const auto reference_pose_pairs = [&](int take_id) {
    std::vector<ClassifiedPosePair> result;
    if (registration == nullptr) {
      return result;
    }
    const TakeModel& take = scene.take(take_id);
    for (const TakeImage& image : take.images) {
      const std::vector<RegisteredPose>* poses =
          registration->find(image.image_id, groups.reference_take);
      if (poses == nullptr || poses->size() < 2) {
        continue;
      }
      const auto classify = [&](const RegisteredPose& pose) {
        int g1 = 0, g2 = 0;
        for (const auto& [point_id, obs_index] : pose.inliers) {
          g1 += reference_group1_points.count(point_id) ? 1 : 0;
          g2 += reference_group2_points.count(point_id) ? 1 : 0;
        }
        return g1 > g2 ? 1 : (g2 > g1 ? 2 : 0);
      };
      const RegisteredPose* background = nullptr;
      const RegisteredPose* foreground = nullptr;
      for (const RegisteredPose& pose : *poses) {
        const int cls = classify(pose);
        if (cls == 1 && background == nullptr) {
          background = &pose;
        } else if (cls == 2 && foreground == nullptr) {
          foreground = &pose;
        }
      }
      if (background != nullptr && foreground != nullptr) {
        result.push_back({take.pose(image), background->pose, foreground->pose});
      }
    }
    return result;
  };

  // Seed the accumulators with the reference take.
  for (const int take_id : groups.merge_order) {
    const TakeModel& take = scene.take(take_id);
    const auto& members = take_members(take_id);

    SimilarityTransform background_sim;
    RigidMotion motion;  // r -> take, in delta_r

    if (take_id == groups.reference_take) {
      // Identity by definition.
    } else {
      // Background correspondences: member position in delta_t vs the current
      // merged position of the same track.
      std::vector<Vec3> src_b, dst_b;
      std::vector<Vec3> src_f_members;  // foreground members in delta_t
      std::vector<Vec3> dst_f_merged;   // current merged foreground positions
      for (const auto& [track_id, point_ids] : members) {
        const auto centroid = current_centroid(track_id);
        if (!centroid.has_value()) {
          continue;
        }
        const Label label = label_of(track_id);
        for (const int point_id : point_ids) {
          const Vec3 position = take.points.at(point_id);
          if (label == Label::kBackground) {
            src_b.push_back(position);
            dst_b.push_back(*centroid);
          } else if (label == Label::kForeground) {
            src_f_members.push_back(position);
            dst_f_merged.push_back(*centroid);
          }
        }
      }

      const auto camera_pairs = reference_pose_pairs(take_id);
      const auto motion_from_camera_pairs = [&]() {
        std::vector<Rotation3> rotations;
        Vec3 mean_translation = Vec3::Zero();
        for (const ClassifiedPosePair& pair : camera_pairs) {
          const RigidMotion m = foreground_motion_from_pair(pair.background, pair.foreground);
          rotations.push_back(m.rotation);
          mean_translation += m.translation;
        }
        mean_translation /= static_cast<double>(rotations.size());
        return RigidMotion{chordal_mean(rotations), mean_translation};
      };

      bool have_sim = false;
      if (src_b.size() >= 3) {
        try {
          background_sim = similarity_from_points(src_b, dst_b);
          have_sim = true;
        } catch (const DegenerateConfiguration&) {
        }
      }
      if (have_sim && camera_pairs.size() >= 2) {
        // Cross-check against the camera-pair route: native poses in delta_t,
        // registered background poses in delta_r.
        std::vector<CameraPosePair> check_pairs;
        check_pairs.reserve(camera_pairs.size());
        for (const ClassifiedPosePair& pair : camera_pairs) {
          check_pairs.push_back({pair.native, pair.background});
        }
        const CameraPairSimilarity check = similarity_from_camera_pair(check_pairs);
        const double discrepancy =
            rotation_geodesic_distance(check.transform.rotation, background_sim.rotation);
        if (discrepancy > options.cross_check_tolerance) {
          merged.warnings.push_back(
              "take " + std::to_string(take_id) +
              ": point and camera-pair similarity estimates disagree by " +
              io::format_double(discrepancy) + " rad");
        }
      }
      if (!have_sim) {
        // Fallback: foreground similarity from foreground tracks, combined
        // with the pose-pair motion estimate.
        merged.warnings.push_back("take " + std::to_string(take_id) +
                                  ": fewer than 3 background correspondences");
        if (src_f_members.size() >= 3 && !camera_pairs.empty()) {
          try {
            const SimilarityTransform foreground_sim =
                similarity_from_points(src_f_members, dst_f_merged);
            motion = motion_from_camera_pairs();
            // sim_B = motion o sim_F.
            background_sim = chain_motion_similarity(motion, foreground_sim);
            have_sim = true;
          } catch (const DegenerateConfiguration&) {
          }
        }
      }
      if (!have_sim) {
        merged.excluded_takes.push_back(take_id);
        merged.warnings.push_back("take " + std::to_string(take_id) +
                                  " excluded: no usable correspondences");
        continue;
      }

      // Foreground motion: rigid alignment from the merged reference-config
      // positions to the take's foreground transported by the background
      // similarity.
      if (src_f_members.size() >= 3) {
        std::vector<Vec3> dst_in_take_config;
        dst_in_take_config.reserve(src_f_members.size());
        for (const Vec3& p : src_f_members) {
          dst_in_take_config.push_back(background_sim.apply(p));
        }
        try {
          motion = rigid_from_points(dst_f_merged, dst_in_take_config);
        } catch (const DegenerateConfiguration&) {
          merged.warnings.push_back("take " + std::to_string(take_id) +
                                    ": foreground too degenerate for a motion estimate");
          motion = RigidMotion{};
        }
      } else if (!camera_pairs.empty()) {
        motion = motion_from_camera_pairs();
        merged.warnings.push_back("take " + std::to_string(take_id) +
                                  ": foreground motion from camera pairs only");
      } else {
        merged.warnings.push_back("take " + std::to_string(take_id) +
                                  ": no foreground correspondences; motion left identity");
        motion = RigidMotion{};
      }
    }

    plan.background_sim[take_id] = background_sim;
    plan.motions[take_id] = motion;
    // sim_F = (r -> t motion)^-1 o sim_B.
    plan.foreground_sim[take_id] =
        chain_motion_similarity(invert_motion(motion), background_sim);
    merged_takes.insert(take_id);

    // Transport this take's members.
    const SimilarityTransform& foreground_sim = plan.foreground_sim.at(take_id);
    for (const auto& [track_id, point_ids] : members) {
      const Label label = label_of(track_id);
      const SimilarityTransform& transport =
          label == Label::kForeground ? foreground_sim : background_sim;
      for (const int point_id : point_ids) {
        accumulators[track_id].contributions.push_back(
            transport.apply(take.points.at(point_id)));
      }
    }
  }

  for (const int take_id : groups.unmerged_takes) {
    merged.excluded_takes.push_back(take_id);
    merged.warnings.push_back("take " + std::to_string(take_id) +
                              " excluded: never merged during segmentation");
  }
  for (const TakeModel& take : scene.takes) {
    if (std::find(groups.merge_order.begin(), groups.merge_order.end(), take.take_id) ==
            groups.merge_order.end() &&
        std::find(groups.unmerged_takes.begin(), groups.unmerged_takes.end(), take.take_id) ==
            groups.unmerged_takes.end()) {
      merged.excluded_takes.push_back(take.take_id);
      merged.warnings.push_back("take " + std::to_string(take.take_id) +
                                " excluded: grouping failed");
    }
  }
  std::sort(merged.excluded_takes.begin(), merged.excluded_takes.end());
  merged.excluded_takes.erase(
      std::unique(merged.excluded_takes.begin(), merged.excluded_takes.end()),
      merged.excluded_takes.end());

  // Duplicate track members fuse to their centroid.
  for (const auto& [track_id, acc] : accumulators) {
    Vec3 sum = Vec3::Zero();
    for (const Vec3& p : acc.contributions) {
      sum += p;
    }
    merged.points[track_id] = {sum / static_cast<double>(acc.contributions.size()),
                               label_of(track_id)};
  }

  // Cameras: the native pose of every image of a merged take, transported and
  // split into its background and foreground poses.
  for (const int take_id : groups.merge_order) {
    if (merged_takes.find(take_id) == merged_takes.end()) {
      continue;
    }
    const TakeModel& take = scene.take(take_id);
    for (const TakeImage& image : take.images) {
      try {
        const auto [background, foreground] = transform_camera(
            take.pose(image), take_id, take_id, RegisteredObject::kBoth, plan);
        merged.cameras.push_back({image.image_id, take_id, background, foreground});
      } catch (const UnresolvableCamera& error) {
        merged.warnings.push_back("image " + std::to_string(image.image_id) +
                                  " dropped: " + error.what());
      }
    }
  }
  std::sort(merged.cameras.begin(), merged.cameras.end(),
            [](const MergedCamera& a, const MergedCamera& b) { return a.image_id < b.image_id; });

  // Observations mapped to tracks through their verified links.
  for (size_t c = 0; c < merged.cameras.size(); ++c) {
    const auto [take, image] = scene.find_image(merged.cameras[c].image_id);
    for (size_t o = 0; o < image->observations.size(); ++o) {
      const int track_id = observation_track(scene, registration, *take, *image,
                                             static_cast<int>(o), membership, options.tau);
      if (track_id < 0 || merged.points.find(track_id) == merged.points.end()) {
        continue;
      }
      merged.observations.push_back(
          {static_cast<int>(c), image->observations[o].pixel, track_id});
    }
  }

  merged.foreground_motions = plan.motions;
  return merged;
}

LabeledScene transform_labeled_scene(const LabeledScene& merged, const SimilarityTransform& s) {
  LabeledScene out = merged;
  for (auto& [track_id, point] : out.points) {
    point.position = s.apply(point.position);
  }
  for (MergedCamera& camera : out.cameras) {
    camera.background_pose = transform_pose(camera.background_pose, s);
    camera.foreground_pose = transform_pose(camera.foreground_pose, s);
  }
  for (auto& [take_id, motion] : out.foreground_motions) {
    motion = motion_in_frame(motion, s);
  }
  return out;
}

void save_merged(const LabeledScene& merged, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path model_dir = dir / "merged";
  fs::create_directories(model_dir);

  {
    io::LineWriter cameras(model_dir / "cameras.txt");
    for (const MergedCamera& camera : merged.cameras) {
      const Intrinsics& k = camera.background_pose.intrinsics;
      cameras << "CAM" << camera.image_id << k.fx << k.fy << k.cx << k.cy;
      cameras.end_line();
    }
  }
  {
    io::LineWriter points(model_dir / "points.txt");
    for (const auto& [track_id, point] : merged.points) {
      points << "PT" << track_id;
      io::write_vec3(points, point.position);
      points.end_line();
    }
  }
  {
    io::LineWriter images(model_dir / "images.txt");
    for (size_t c = 0; c < merged.cameras.size(); ++c) {
      const MergedCamera& camera = merged.cameras[c];
      images << "IMG" << camera.image_id << camera.image_id;
      io::write_quat(images, QuatRotation::from_rotation(camera.background_pose.rotation));
      io::write_vec3(images, camera.background_pose.center);
      images.end_line();
      for (const MergedObservation& obs : merged.observations) {
        if (obs.camera_index != static_cast<int>(c)) {
          continue;
        }
        images << "OBS" << obs.pixel.x() << obs.pixel.y() << 1 << merged.reference_take
               << obs.track_id;
        images.end_line();
      }
    }
  }
  {
    io::LineWriter motions(dir / "motions.txt");
    motions << "REF" << merged.reference_take;
    motions.end_line();
    for (const auto& [take_id, motion] : merged.foreground_motions) {
      motions << "FGM" << take_id;
      io::write_quat(motions, QuatRotation::from_rotation(motion.rotation));
      io::write_vec3(motions, motion.translation);
      motions.end_line();
    }
    for (const MergedCamera& camera : merged.cameras) {
      motions << "IMT" << camera.image_id << camera.take_id;
      motions.end_line();
    }
    for (const int take_id : merged.excluded_takes) {
      motions << "EXCL" << take_id;
      motions.end_line();
    }
  }
  {
    std::map<int, Label> labels;
    for (const auto& [track_id, point] : merged.points) {
      labels[track_id] = point.label;
    }
    save_labels(labels, dir / "labels.txt");
  }
}

LabeledScene load_merged(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path model_dir = dir / "merged";
  LabeledScene merged;

  std::map<int, Intrinsics> intrinsics;
  {
    io::TokenFile cameras(model_dir / "cameras.txt");
    while (cameras.next_line()) {
      if (cameras.tag() != "CAM") {
        cameras.fail("expected CAM line");
      }
      cameras.expect_size(6);
      intrinsics[cameras.int_at(1)] = {cameras.double_at(2), cameras.double_at(3),
                                       cameras.double_at(4), cameras.double_at(5)};
    }
  }
  {
    io::TokenFile points(model_dir / "points.txt");
    while (points.next_line()) {
      if (points.tag() != "PT") {
        points.fail("expected PT line");
      }
      points.expect_size(5);
      merged.points[points.int_at(1)] = {io::read_vec3(points, 2), Label::kUnknown};
    }
  }

  std::map<int, int> image_takes;
  {
    io::TokenFile motions(dir / "motions.txt");
    while (motions.next_line()) {
      if (motions.tag() == "REF") {
        motions.expect_size(2);
        merged.reference_take = motions.int_at(1);
      } else if (motions.tag() == "FGM") {
        motions.expect_size(9);
        merged.foreground_motions[motions.int_at(1)] = {io::read_quat(motions, 2).rotation(),
                                                        io::read_vec3(motions, 6)};
      } else if (motions.tag() == "IMT") {
        motions.expect_size(3);
        image_takes[motions.int_at(1)] = motions.int_at(2);
      } else if (motions.tag() == "EXCL") {
        motions.expect_size(2);
        merged.excluded_takes.push_back(motions.int_at(1));
      } else {
        motions.fail("expected REF, FGM, IMT or EXCL line");
      }
    }
  }

  {
    io::TokenFile images(model_dir / "images.txt");
    int current_camera = -1;
    while (images.next_line()) {
      if (images.tag() == "IMG") {
        images.expect_size(10);
        MergedCamera camera;
        camera.image_id = images.int_at(1);
        const auto take_it = image_takes.find(camera.image_id);
        if (take_it == image_takes.end()) {
          images.fail("image " + std::to_string(camera.image_id) + " missing from motions.txt");
        }
        camera.take_id = take_it->second;
        camera.background_pose.intrinsics = intrinsics.at(images.int_at(2));
        camera.background_pose.rotation = io::read_quat(images, 3).rotation();
        camera.background_pose.center = io::read_vec3(images, 7);
        const auto motion_it = merged.foreground_motions.find(camera.take_id);
        if (motion_it == merged.foreground_motions.end()) {
          images.fail("no foreground motion for take " + std::to_string(camera.take_id));
        }
        // Foreground pose derived from the background pose and take motion.
        const RigidMotion& motion = motion_it->second;
        camera.foreground_pose.intrinsics = camera.background_pose.intrinsics;
        camera.foreground_pose.rotation = camera.background_pose.rotation * motion.rotation;
        camera.foreground_pose.center = invert_motion(motion).apply(camera.background_pose.center);
        merged.cameras.push_back(std::move(camera));
        current_camera = static_cast<int>(merged.cameras.size()) - 1;
      } else if (images.tag() == "OBS") {
        if (current_camera < 0) {
          images.fail("OBS line before any IMG line");
        }
        images.expect_size(6);
        if (images.int_at(3) != 1) {
          images.fail("merged observations carry exactly one link");
        }
        merged.observations.push_back(
            {current_camera, {images.double_at(1), images.double_at(2)}, images.int_at(5)});
      } else {
        images.fail("expected IMG or OBS line");
      }
    }
  }

  const std::map<int, Label> labels = load_labels(dir / "labels.txt");
  for (const auto& [track_id, label] : labels) {
    const auto it = merged.points.find(track_id);
    if (it != merged.points.end()) {
      it->second.label = label;
    }
  }
  return merged;
}

}  // namespace tbsfm
