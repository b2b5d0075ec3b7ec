#include "tbsfm/registration.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "tbsfm/text_io.hpp"

namespace tbsfm {
namespace {

// Adaptive iteration bound: enough samples to hit an all-inlier draw of size 4
// with the requested confidence, given the current inlier ratio.
int adaptive_iterations(double inlier_ratio, double confidence, int cap) {
  const double p_good = std::pow(std::clamp(inlier_ratio, 0.0, 1.0), 4);
  if (p_good <= 1e-12) {
    return cap;
  }
  if (p_good >= 1.0 - 1e-12) {
    return 1;
  }
  const double n = std::log(1.0 - confidence) / std::log(1.0 - p_good);
  if (!(n > 0.0) || n > static_cast<double>(cap)) {
    return cap;
  }
  return static_cast<int>(std::ceil(n));
}

std::vector<std::pair<int, int>> collect_inliers(const CameraPose& pose,
                                                 const std::vector<Corr2D3D>& corrs,
                                                 double tau) {
  std::vector<std::pair<int, int>> inliers;
  for (const Corr2D3D& corr : corrs) {
    const auto reproj = try_project(pose, corr.point);
    if (reproj.has_value() && (*reproj - corr.pixel).norm() < tau) {
      inliers.emplace_back(corr.point_id, corr.obs_index);
    }
  }
  std::sort(inliers.begin(), inliers.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  return inliers;
}

}  // namespace

void RansacParams::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw std::invalid_argument("confidence must be in (0, 1)");
  }
  if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  if (min_inliers < 4) throw std::invalid_argument("min_inliers must be >= 4");
  if (max_models < 2) throw std::invalid_argument("max_models must be >= 2");
}

bool RegisteredPose::has_inlier(int point_id, int obs_index) const {
  const auto it = std::lower_bound(
      inliers.begin(), inliers.end(), obs_index,
      [](const std::pair<int, int>& entry, int value) { return entry.second < value; });
  return it != inliers.end() && it->second == obs_index && it->first == point_id;
}

CameraPose refine_pose(const CameraPose& initial,
                       const std::vector<Corr2D3D>& corrs,
                       int max_iterations) {
  CameraPose pose = initial;

  const auto cost_of = [&](const CameraPose& p) {
    double cost = 0.0;
    for (const Corr2D3D& corr : corrs) {
      const auto reproj = try_project(p, corr.point);
      if (reproj.has_value()) {
        cost += (*reproj - corr.pixel).squaredNorm();
      } else {
        cost += 1e12;  // pushes the solver away from cheirality violations
      }
    }
    return cost;
  };

  double cost = cost_of(pose);
  double damping = 1e-8;
  for (int iter = 0; iter < max_iterations; ++iter) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (const Corr2D3D& corr : corrs) {
      const Vec3 u = pose.rotation * (corr.point - pose.center);
      if (u.z() <= kMinProjectionDepth) {
        continue;
      }
      const Intrinsics& k = pose.intrinsics;
      const Vec2 reproj{k.fx * u.x() / u.z() + k.cx, k.fy * u.y() / u.z() + k.cy};
      const Vec2 residual = reproj - corr.pixel;
      Eigen::Matrix<double, 2, 3> d_pix;
      d_pix << k.fx / u.z(), 0.0, -k.fx * u.x() / (u.z() * u.z()),
               0.0, k.fy / u.z(), -k.fy * u.y() / (u.z() * u.z());
      Eigen::Matrix<double, 2, 6> j;
      // Left rotation increment: u = exp([w]x) R (X - c) => du/dw = -[u]x.
      Mat3 skew;
      skew << 0.0, -u.z(), u.y(), u.z(), 0.0, -u.x(), -u.y(), u.x(), 0.0;
      j.block<2, 3>(0, 0) = d_pix * (-skew);
      j.block<2, 3>(0, 3) = d_pix * (-pose.rotation.matrix());
      h += j.transpose() * j;
      g += j.transpose() * residual;
    }
    if (g.cwiseAbs().maxCoeff() < 1e-14) {
      break;
    }
    bool stepped = false;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::Matrix<double, 6, 6> augmented = h;
      augmented.diagonal() += damping * h.diagonal() + Eigen::Matrix<double, 6, 1>::Constant(1e-12);
      const Eigen::Matrix<double, 6, 1> delta = augmented.ldlt().solve(-g);
      CameraPose trial = pose;
      trial.rotation = Rotation3::from_axis_angle(delta.head<3>()) * pose.rotation;
      trial.center += delta.tail<3>();
      const double trial_cost = cost_of(trial);
      if (trial_cost < cost) {
        pose = trial;
        cost = trial_cost;
        damping = std::max(damping / 4.0, 1e-12);
        stepped = true;
        break;
      }
      damping *= 10.0;
    }
    if (!stepped) {
      break;
    }
  }
  return pose;
}

std::optional<RegisteredPose> pnp_ransac(const std::vector<Corr2D3D>& corrs,
                                         const Intrinsics& intrinsics,
                                         const RansacParams& params,
                                         Rng& rng) {
  params.validate();
  const int n = static_cast<int>(corrs.size());
  if (n < 4) {
    throw std::invalid_argument("pnp_ransac needs at least 4 correspondences, got " +
                                std::to_string(n));
  }

  CameraPose best_pose;
  int best_count = 0;
  int iteration_cap = params.max_iterations;
  for (int iter = 0; iter < iteration_cap; ++iter) {
    // Sample four distinct correspondences: three for the solver, one to pick
    // the solution branch.
    std::array<int, 4> sample{};
    for (int i = 0; i < 4; ++i) {
      bool fresh = true;
      do {
        sample[static_cast<size_t>(i)] = rng.uniform_int(n);
        fresh = true;
        for (int j = 0; j < i; ++j) {
          fresh = fresh && sample[static_cast<size_t>(j)] != sample[static_cast<size_t>(i)];
        }
      } while (!fresh);
    }
    const std::array<Vec2, 3> pixels{corrs[static_cast<size_t>(sample[0])].pixel,
                                     corrs[static_cast<size_t>(sample[1])].pixel,
                                     corrs[static_cast<size_t>(sample[2])].pixel};
    const std::array<Vec3, 3> points{corrs[static_cast<size_t>(sample[0])].point,
                                     corrs[static_cast<size_t>(sample[1])].point,
                                     corrs[static_cast<size_t>(sample[2])].point};
    const std::vector<CameraPose> candidates = p3p_minimal(pixels, points, intrinsics);
    if (candidates.empty()) {
      continue;
    }
    const Corr2D3D& check = corrs[static_cast<size_t>(sample[3])];
    const CameraPose* chosen = nullptr;
    double chosen_error = std::numeric_limits<double>::infinity();
    for (const CameraPose& candidate : candidates) {
      const auto reproj = try_project(candidate, check.point);
      if (!reproj.has_value()) {
        continue;
      }
      const double error = (*reproj - check.pixel).norm();
      if (error < chosen_error) {
        chosen_error = error;
        chosen = &candidate;
      }
    }
    if (chosen == nullptr) {
      continue;
    }

    int count = 0;
    for (const Corr2D3D& corr : corrs) {
      const auto reproj = try_project(*chosen, corr.point);
      if (reproj.has_value() && (*reproj - corr.pixel).norm() < params.tau) {
        ++count;
      }
    }
    if (count > best_count) {
      best_count = count;
      best_pose = *chosen;
      iteration_cap = std::min(
          iteration_cap,
          iter + 1 + adaptive_iterations(static_cast<double>(count) / static_cast<double>(n),
                                         params.confidence, params.max_iterations));
    }
  }

  if (best_count < std::max(4, params.min_inliers)) {
    return std::nullopt;
  }

  // Refine on the consensus set, then re-collect inliers under the polished pose.
  std::vector<Corr2D3D> support;
  for (const Corr2D3D& corr : corrs) {
    const auto reproj = try_project(best_pose, corr.point);
    if (reproj.has_value() && (*reproj - corr.pixel).norm() < params.tau) {
      support.push_back(corr);
    }
  }
  const CameraPose refined = refine_pose(best_pose, support, params.refine_iterations);
  std::vector<std::pair<int, int>> inliers = collect_inliers(refined, corrs, params.tau);
  if (static_cast<int>(inliers.size()) < params.min_inliers) {
    return std::nullopt;
  }

  RegisteredPose result;
  result.pose = refined;
  result.inliers = std::move(inliers);
  return result;
}

std::vector<RegisteredPose> sequential_register(const MultiTakeScene& scene,
                                                int image_id,
                                                int target_take,
                                                const RansacParams& params) {
  const auto [source_model, image] = scene.find_image(image_id);
  if (image == nullptr) {
    throw std::out_of_range("unknown image id " + std::to_string(image_id));
  }
  const TakeModel& target = scene.take(target_take);
  const Intrinsics intrinsics = source_model->cameras.at(image->camera_id);

  std::vector<Corr2D3D> remaining;
  for (const ImageCorrespondence& corr : correspondences(scene, image_id, target_take)) {
    remaining.push_back(
        {corr.pixel, target.points.at(corr.point_id), corr.point_id, corr.obs_index});
  }

  Rng rng = Rng(params.seed).fork(static_cast<uint64_t>(image_id),
                                  static_cast<uint64_t>(target_take));
  std::vector<RegisteredPose> poses;
  while (static_cast<int>(poses.size()) < params.max_models &&
         static_cast<int>(remaining.size()) >= std::max(4, params.min_inliers)) {
    auto pose = pnp_ransac(remaining, intrinsics, params, rng);
    if (!pose.has_value()) {
      break;
    }
    pose->image_id = image_id;
    pose->source_take = source_model->take_id;
    pose->target_take = target_take;

    // Fitting continues on the remaining data only.
    std::vector<Corr2D3D> next;
    next.reserve(remaining.size());
    for (const Corr2D3D& corr : remaining) {
      if (!pose->has_inlier(corr.point_id, corr.obs_index)) {
        next.push_back(corr);
      }
    }
    remaining = std::move(next);
    poses.push_back(std::move(*pose));
  }

  std::stable_sort(poses.begin(), poses.end(), [](const RegisteredPose& a, const RegisteredPose& b) {
    return a.inlier_count() > b.inlier_count();
  });
  return poses;
}

const std::vector<RegisteredPose>* Registration::find(int image_id, int target_take) const {
  const auto it = poses.find({image_id, target_take});
  return it == poses.end() ? nullptr : &it->second;
}

Registration register_all(const MultiTakeScene& scene, const RansacParams& params, int threads) {
  std::vector<std::pair<int, int>> tasks;
  for (const TakeModel& take : scene.takes) {
    for (const TakeImage& image : take.images) {
      for (const TakeModel& target : scene.takes) {
        if (target.take_id != take.take_id) {
          tasks.emplace_back(image.image_id, target.take_id);
        }
      }
    }
  }

  std::vector<std::vector<RegisteredPose>> results(tasks.size());
  const auto worker = [&](std::atomic<size_t>& cursor) {
    while (true) {
      const size_t index = cursor.fetch_add(1);
      if (index >= tasks.size()) {
        return;
      }
      results[index] = sequential_register(scene, tasks[index].first, tasks[index].second, params);
    }
  };

  threads = std::max(1, threads);
  if (threads == 1) {
    std::atomic<size_t> cursor{0};
    worker(cursor);
  } else {
    std::atomic<size_t> cursor{0};
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) {
      pool.emplace_back([&] { worker(cursor); });
    }
    for (std::thread& t : pool) {
      t.join();
    }
  }

  Registration registration;
  for (size_t i = 0; i < tasks.size(); ++i) {
    registration.poses[tasks[i]] = std::move(results[i]);
  }
  return registration;
}

void save_registration(const Registration& reg, const std::filesystem::path& path) {
  io::LineWriter out(path);
  for (const auto& [key, poses] : reg.poses) {
    for (size_t i = 0; i < poses.size(); ++i) {
      const RegisteredPose& pose = poses[i];
      out << "REG" << key.first << key.second << static_cast<int>(i);
      io::write_quat(out, QuatRotation::from_rotation(pose.pose.rotation));
      io::write_vec3(out, pose.pose.center);
      out << pose.inlier_count();
      out.end_line();
      out << "INL" << pose.inlier_count();
      for (const auto& [point_id, obs_index] : pose.inliers) {
        out << point_id << obs_index;
      }
      out.end_line();
    }
  }
}

void attach_scene_info(Registration& reg, const MultiTakeScene& scene) {
  for (auto& [key, poses] : reg.poses) {
    const auto [take, image] = scene.find_image(key.first);
    if (image == nullptr) {
      throw std::runtime_error("registration references unknown image id " +
                               std::to_string(key.first));
    }
    for (RegisteredPose& pose : poses) {
      pose.source_take = take->take_id;
      pose.pose.intrinsics = take->cameras.at(image->camera_id);
    }
  }
}

Registration load_registration(const std::filesystem::path& path) {
  // The dump carries no intrinsics or source takes; attach_scene_info()
  // restores them from the scene.
  Registration reg;
  io::TokenFile file(path);
  RegisteredPose* open_pose = nullptr;
  while (file.next_line()) {
    if (file.tag() == "REG") {
      file.expect_size(12);
      RegisteredPose pose;
      pose.image_id = file.int_at(1);
      pose.target_take = file.int_at(2);
      pose.pose.rotation = io::read_quat(file, 4).rotation();
      pose.pose.center = io::read_vec3(file, 8);
      auto& list = reg.poses[{pose.image_id, pose.target_take}];
      if (file.int_at(3) != static_cast<int>(list.size())) {
        file.fail("pose_index out of order");
      }
      list.push_back(std::move(pose));
      open_pose = &list.back();
    } else if (file.tag() == "INL") {
      if (open_pose == nullptr) {
        file.fail("INL line before any REG line");
      }
      const int n = file.int_at(1);
      file.expect_size(2 + 2 * static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        open_pose->inliers.emplace_back(file.int_at(2 + 2 * static_cast<size_t>(i)),
                                        file.int_at(3 + 2 * static_cast<size_t>(i)));
      }
      open_pose = nullptr;
    } else {
      file.fail("expected REG or INL line");
    }
  }
  return reg;
}

}  // namespace tbsfm
