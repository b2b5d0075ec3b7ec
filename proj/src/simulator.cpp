#include "tbsfm/simulator.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numbers>

#include <json.hpp>

#include "tbsfm/random.hpp"

namespace tbsfm {
namespace {

constexpr double kBackgroundExtent = 4.0;   // plane spans [-extent, extent]^2
constexpr double kBackgroundRelief = 0.25;  // bump height range
constexpr double kForegroundRadius = 0.7;
const Vec3 kForegroundCenter{0.0, 0.0, 2.2};
const Vec3 kLookTarget{0.0, 0.0, 1.0};
constexpr double kCameraRingRadius = 6.0;
constexpr double kCameraHeight = 3.2;
constexpr double kFocalLength = 1200.0;
// Smallest apparent foreground motion any cross-take camera may observe.
// Motion draws below this leave points consistent with both rigid bodies;
// such draws are rejected and resampled.
constexpr double kMinApparentMotionPx = 10.0;
constexpr int kMotionRetries = 50;

Vec3 random_unit_vector(Rng& rng) {
  while (true) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = v.norm();
    if (n > 1e-6) {
      return v / n;
    }
  }
}

Rotation3 random_rotation(Rng& rng) {
  // Uniform over SO(3) via a normalized 4D Gaussian quaternion.
  while (true) {
    const double w = rng.normal();
    const double x = rng.normal();
    const double y = rng.normal();
    const double z = rng.normal();
    if (std::sqrt(w * w + x * x + y * y + z * z) > 1e-6) {
      return Rotation3::from_quaternion(w, x, y, z);
    }
  }
}

Rotation3 look_at_rotation(const Vec3& position, const Vec3& target) {
  const Vec3 forward = (target - position).normalized();
  Vec3 right = Vec3{0.0, 0.0, 1.0}.cross(forward);
  if (right.norm() < 1e-9) {
    right = Vec3{1.0, 0.0, 0.0};
  }
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = forward;
  return Rotation3::from_matrix(r);
}

}  // namespace

void SimConfig::validate() const {
  if (takes < 2) throw std::invalid_argument("takes must be >= 2");
  if (cameras_per_take < 2 || cameras_per_take > 512) {
    throw std::invalid_argument("cameras_per_take must be in [2, 512]");
  }
  if (background_points < 1 || foreground_points < 1) {
    throw std::invalid_argument("point counts must be positive");
  }
  if (pixel_noise_sigma < 0.0) throw std::invalid_argument("pixel_noise_sigma must be >= 0");
  if (outlier_fraction < 0.0 || outlier_fraction >= 1.0) {
    throw std::invalid_argument("outlier_fraction must be in [0, 1)");
  }
  if (visibility_fraction <= 0.0 || visibility_fraction > 1.0) {
    throw std::invalid_argument("visibility_fraction must be in (0, 1]");
  }
  if (foreground_rotation_magnitude < 0.0 || foreground_translation_magnitude < 0.0) {
    throw std::invalid_argument("motion magnitudes must be >= 0");
  }
  if (image_width < 2 || image_height < 2) {
    throw std::invalid_argument("image size must be at least 2x2");
  }
}

SimConfig load_sim_config(const std::filesystem::path& json_path) {
  std::ifstream stream(json_path);
  if (!stream) {
    throw std::runtime_error("cannot open config " + json_path.string());
  }
  nlohmann::json j;
  stream >> j;

  SimConfig c;
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  if (j.contains("takes")) c.takes = j.at("takes").get<int>();
  if (j.contains("background_points")) c.background_points = j.at("background_points").get<int>();
  if (j.contains("foreground_points")) c.foreground_points = j.at("foreground_points").get<int>();
  if (j.contains("cameras_per_take")) c.cameras_per_take = j.at("cameras_per_take").get<int>();
  if (j.contains("pixel_noise_sigma")) c.pixel_noise_sigma = j.at("pixel_noise_sigma").get<double>();
  if (j.contains("outlier_fraction")) c.outlier_fraction = j.at("outlier_fraction").get<double>();
  if (j.contains("visibility_fraction")) {
    c.visibility_fraction = j.at("visibility_fraction").get<double>();
  }
  if (j.contains("foreground_rotation_magnitude")) {
    c.foreground_rotation_magnitude = j.at("foreground_rotation_magnitude").get<double>();
  }
  if (j.contains("foreground_translation_magnitude")) {
    c.foreground_translation_magnitude = j.at("foreground_translation_magnitude").get<double>();
  }
  if (j.contains("scramble")) c.scramble = j.at("scramble").get<bool>();
  if (j.contains("image_width")) c.image_width = j.at("image_width").get<int>();
  if (j.contains("image_height")) c.image_height = j.at("image_height").get<int>();
  c.validate();
  return c;
}

SimResult generate(const SimConfig& config) {
  config.validate();
  Rng root(config.seed);

  const int n_points = config.background_points + config.foreground_points;
  const auto is_foreground = [&](int phys) { return phys >= config.background_points; };

  // World points in the initial configuration.
  Rng point_rng = root.fork(1);
  std::vector<Vec3> initial(n_points);
  for (int i = 0; i < config.background_points; ++i) {
    initial[i] = {point_rng.uniform(-kBackgroundExtent, kBackgroundExtent),
                  point_rng.uniform(-kBackgroundExtent, kBackgroundExtent),
                  point_rng.uniform(0.0, kBackgroundRelief)};
  }
  for (int i = config.background_points; i < n_points; ++i) {
    initial[i] = kForegroundCenter + kForegroundRadius * random_unit_vector(point_rng);
  }

  // Per-take gauge scramble delta -> delta_t.
  Rng scramble_rng = root.fork(3);
  std::vector<SimilarityTransform> scrambles(static_cast<size_t>(config.takes));
  if (config.scramble) {
    for (int t = 0; t < config.takes; ++t) {
      scrambles[static_cast<size_t>(t)] = {random_rotation(scramble_rng),
                                           {scramble_rng.uniform(-2.0, 2.0),
                                            scramble_rng.uniform(-2.0, 2.0),
                                            scramble_rng.uniform(-2.0, 2.0)},
                                           scramble_rng.uniform(0.5, 2.0)};
    }
  }

  // World camera poses per take.
  Rng camera_rng = root.fork(4);
  std::vector<std::vector<CameraPose>> world_cameras(static_cast<size_t>(config.takes));
  const Intrinsics intrinsics{kFocalLength, kFocalLength, 0.5 * config.image_width,
                              0.5 * config.image_height};
  for (int t = 0; t < config.takes; ++t) {
    for (int i = 0; i < config.cameras_per_take; ++i) {
      const double angle = 2.0 * std::numbers::pi *
                               (static_cast<double>(i) + 0.37 * static_cast<double>(t)) /
                               static_cast<double>(config.cameras_per_take) +
                           camera_rng.uniform(-0.05, 0.05);
      const double radius = kCameraRingRadius + camera_rng.uniform(-0.5, 0.5);
      const double height = kCameraHeight + camera_rng.uniform(-0.6, 0.6);
      const Vec3 position{radius * std::cos(angle), radius * std::sin(angle), height};
      world_cameras[static_cast<size_t>(t)].push_back(
          {intrinsics, look_at_rotation(position, kLookTarget), position});
    }
  }

  // Foreground motion per take; the initial position equals take 1. A draw is
  // accepted only when every observed foreground point moves visibly in every
  // cross-take camera, keeping the two rigid bodies geometrically separable.
  Rng motion_rng = root.fork(2);
  std::vector<RigidMotion> motions(static_cast<size_t>(config.takes));
  std::string motion_warning;
  const auto draw_motions = [&] {
    for (int t = 1; t < config.takes; ++t) {
      const double angle = motion_rng.uniform(0.0, config.foreground_rotation_magnitude);
      const Rotation3 a = Rotation3::from_axis_angle(angle * random_unit_vector(motion_rng));
      const Vec3 shift =
          motion_rng.uniform(0.0, config.foreground_translation_magnitude) *
          random_unit_vector(motion_rng);
      // Rotate about the object center, then shift the center.
      motions[static_cast<size_t>(t)] = {a, kForegroundCenter - a * kForegroundCenter + shift};
    }
  };
  const auto min_apparent_motion = [&] {
    double smallest = std::numeric_limits<double>::infinity();
    for (int u = 0; u < config.takes; ++u) {
      for (const CameraPose& pose : world_cameras[static_cast<size_t>(u)]) {
        for (int v = 0; v < config.takes; ++v) {
          if (v == u) {
            continue;
          }
          for (int phys = config.background_points; phys < n_points; ++phys) {
            const auto seen =
                try_project(pose, motions[static_cast<size_t>(u)].apply(initial[phys]));
            if (!seen.has_value() || seen->x() < 0.0 || seen->x() >= config.image_width ||
                seen->y() < 0.0 || seen->y() >= config.image_height) {
              continue;  // not observed by this camera
            }
            const auto other =
                try_project(pose, motions[static_cast<size_t>(v)].apply(initial[phys]));
            if (other.has_value()) {
              smallest = std::min(smallest, (*other - *seen).norm());
            }
          }
        }
      }
    }
    return smallest;
  };
  draw_motions();
  if (config.foreground_rotation_magnitude > 0.0 ||
      config.foreground_translation_magnitude > 0.0) {
    int attempt = 0;
    while (min_apparent_motion() < kMinApparentMotionPx && attempt < kMotionRetries) {
      draw_motions();
      ++attempt;
    }
    if (attempt >= kMotionRetries) {
      motion_warning =
          "foreground motion draws left some points apparently static; the two bodies may not "
          "be separable";
    }
  }

  // Visibility: in front of the camera, inside the image, and kept by the
  // per-camera sampling fraction.
  Rng vis_rng = root.fork(5);
  const auto world_position = [&](int take_index, int phys) {
    return is_foreground(phys) ? motions[static_cast<size_t>(take_index)].apply(initial[phys])
                               : initial[phys];
  };
  // visible[t][camera][phys]
  std::vector<std::vector<std::vector<bool>>> visible(
      static_cast<size_t>(config.takes),
      std::vector<std::vector<bool>>(static_cast<size_t>(config.cameras_per_take),
                                     std::vector<bool>(static_cast<size_t>(n_points), false)));
  for (int t = 0; t < config.takes; ++t) {
    for (int cam = 0; cam < config.cameras_per_take; ++cam) {
      const CameraPose& pose = world_cameras[static_cast<size_t>(t)][static_cast<size_t>(cam)];
      for (int phys = 0; phys < n_points; ++phys) {
        const double keep = vis_rng.uniform();
        const auto pixel = try_project(pose, world_position(t, phys));
        if (!pixel.has_value()) {
          continue;
        }
        if (pixel->x() < 0.0 || pixel->x() >= config.image_width || pixel->y() < 0.0 ||
            pixel->y() >= config.image_height) {
          continue;
        }
        if (keep >= config.visibility_fraction) {
          continue;
        }
        visible[static_cast<size_t>(t)][static_cast<size_t>(cam)][static_cast<size_t>(phys)] =
            true;
      }
    }
  }

  // A point enters a take's model when at least two of its cameras see it.
  // Per-take point ids are shuffled so they carry no cross-take structure.
  std::vector<std::map<int, int>> point_id_of(static_cast<size_t>(config.takes));  // phys -> id
  std::vector<std::vector<int>> model_points(static_cast<size_t>(config.takes));   // phys list
  for (int t = 0; t < config.takes; ++t) {
    for (int phys = 0; phys < n_points; ++phys) {
      int count = 0;
      for (int cam = 0; cam < config.cameras_per_take; ++cam) {
        count += visible[static_cast<size_t>(t)][static_cast<size_t>(cam)][static_cast<size_t>(phys)] ? 1 : 0;
      }
      if (count >= 2) {
        model_points[static_cast<size_t>(t)].push_back(phys);
      }
    }
    Rng id_rng = root.fork(6, static_cast<uint64_t>(t));
    std::vector<int> ids(model_points[static_cast<size_t>(t)].size());
    for (size_t i = 0; i < ids.size(); ++i) {
      ids[i] = static_cast<int>(i) + 1;
    }
    id_rng.shuffle(ids);
    for (size_t i = 0; i < ids.size(); ++i) {
      point_id_of[static_cast<size_t>(t)][model_points[static_cast<size_t>(t)][i]] = ids[i];
    }
  }

  SimResult result;
  if (!motion_warning.empty()) {
    result.warnings.push_back(motion_warning);
  }
  Rng noise_rng = root.fork(7);
  for (int t = 0; t < config.takes; ++t) {
    const int take_id = t + 1;
    const SimilarityTransform& scramble = scrambles[static_cast<size_t>(t)];
    TakeModel take;
    take.take_id = take_id;
    take.cameras[0] = intrinsics;
    for (const int phys : model_points[static_cast<size_t>(t)]) {
      take.points[point_id_of[static_cast<size_t>(t)].at(phys)] =
          scramble.apply(world_position(t, phys));
    }
    for (int cam = 0; cam < config.cameras_per_take; ++cam) {
      const CameraPose& world_pose =
          world_cameras[static_cast<size_t>(t)][static_cast<size_t>(cam)];
      const CameraPose stored_pose = transform_pose(world_pose, scramble);
      TakeImage image;
      image.image_id = take_id * 1000 + cam;
      image.camera_id = 0;
      image.rotation = QuatRotation::from_rotation(stored_pose.rotation);
      image.center = stored_pose.center;
      for (int phys = 0; phys < n_points; ++phys) {
        if (!visible[static_cast<size_t>(t)][static_cast<size_t>(cam)][static_cast<size_t>(phys)]) {
          continue;
        }
        Observation obs;
        obs.pixel = project(world_pose, world_position(t, phys));
        if (config.pixel_noise_sigma > 0.0) {
          obs.pixel.x() += noise_rng.normal(config.pixel_noise_sigma);
          obs.pixel.y() += noise_rng.normal(config.pixel_noise_sigma);
        }
        for (int u = 0; u < config.takes; ++u) {
          const auto it = point_id_of[static_cast<size_t>(u)].find(phys);
          if (it != point_id_of[static_cast<size_t>(u)].end()) {
            obs.links.emplace_back(u + 1, it->second);
          }
        }
        image.observations.push_back(std::move(obs));
      }
      take.images.push_back(std::move(image));
    }
    result.scene.takes.push_back(std::move(take));
  }

  // Rewire an exact fraction of the links to wrong points of the same take.
  if (config.outlier_fraction > 0.0) {
    struct LinkRef {
      int take_index;
      int image_index;
      int obs_index;
      int link_index;
    };
    std::vector<LinkRef> all_links;
    for (size_t t = 0; t < result.scene.takes.size(); ++t) {
      const TakeModel& take = result.scene.takes[t];
      for (size_t j = 0; j < take.images.size(); ++j) {
        for (size_t o = 0; o < take.images[j].observations.size(); ++o) {
          for (size_t l = 0; l < take.images[j].observations[o].links.size(); ++l) {
            all_links.push_back({static_cast<int>(t), static_cast<int>(j), static_cast<int>(o),
                                 static_cast<int>(l)});
          }
        }
      }
    }
    Rng outlier_rng = root.fork(8);
    outlier_rng.shuffle(all_links);
    const size_t n_rewire = static_cast<size_t>(
        std::llround(config.outlier_fraction * static_cast<double>(all_links.size())));
    for (size_t i = 0; i < n_rewire && i < all_links.size(); ++i) {
      const LinkRef& ref = all_links[i];
      auto& link = result.scene.takes[static_cast<size_t>(ref.take_index)]
                       .images[static_cast<size_t>(ref.image_index)]
                       .observations[static_cast<size_t>(ref.obs_index)]
                       .links[static_cast<size_t>(ref.link_index)];
      const auto& target_points = result.scene.takes[static_cast<size_t>(link.first - 1)].points;
      if (target_points.size() < 2) {
        continue;
      }
      // Draw a different point id of the same take.
      int replacement = link.second;
      while (replacement == link.second) {
        auto it = target_points.begin();
        std::advance(it, outlier_rng.uniform_int(static_cast<int>(target_points.size())));
        replacement = it->first;
      }
      link.second = replacement;
    }
  }

  // Ground truth.
  for (int t = 0; t < config.takes; ++t) {
    const int take_id = t + 1;
    for (const int phys : model_points[static_cast<size_t>(t)]) {
      result.ground_truth.labels[{take_id, point_id_of[static_cast<size_t>(t)].at(phys)}] =
          is_foreground(phys) ? Label::kForeground : Label::kBackground;
    }
    const RigidMotion& motion = motions[static_cast<size_t>(t)];
    result.ground_truth.motions[take_id] = {QuatRotation::from_rotation(motion.rotation),
                                            motion.translation};
    const SimilarityTransform to_world = invert_similarity(scrambles[static_cast<size_t>(t)]);
    result.ground_truth.take_to_world[take_id] = {QuatRotation::from_rotation(to_world.rotation),
                                                  to_world.translation, to_world.scale};
  }

  // Registration needs at least four 2D-3D matches per image-take pair; warn
  // about take pairs that cannot reach that.
  for (const TakeModel& take : result.scene.takes) {
    for (const TakeModel& target : result.scene.takes) {
      if (take.take_id == target.take_id) {
        continue;
      }
      size_t count = 0;
      for (const TakeImage& image : take.images) {
        count += correspondences(result.scene, image.image_id, target.take_id).size();
      }
      if (count < 4) {
        result.warnings.push_back("takes " + std::to_string(take.take_id) + " -> " +
                                  std::to_string(target.take_id) + " share only " +
                                  std::to_string(count) +
                                  " correspondences; registration will be impossible");
      }
    }
  }
  return result;
}

}  // namespace tbsfm
