#include "tbsfm/bundle_adjustment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace tbsfm {
namespace {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

double median_of(std::vector<double> values) {
  if (values.empty()) {
    return 0.0;
  }
  const size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid),
                   values.end());
  double result = values[mid];
  if (values.size() % 2 == 0) {
    const auto lower = std::max_element(values.begin(),
                                        values.begin() + static_cast<std::ptrdiff_t>(mid));
    result = 0.5 * (result + *lower);
  }
  return result;
}

}  // namespace

BAProblem::BAProblem(const LabeledScene& scene, const BAOptions& options)
    : scene_(scene), options_(options) {
  if (scene.cameras.size() < 2) {
    throw std::invalid_argument("under-constrained: fewer than 2 cameras");
  }

  // Labeled tracks referenced by at least one labeled observation become
  // parameters; everything else passes through unchanged.
  std::set<int> used_tracks;
  for (const MergedObservation& obs : scene.observations) {
    const auto it = scene.points.find(obs.track_id);
    if (it != scene.points.end() && it->second.label != Label::kUnknown) {
      used_tracks.insert(obs.track_id);
    }
  }
  if (used_tracks.size() < 4) {
    throw std::invalid_argument("under-constrained: fewer than 4 labeled points");
  }
  std::map<int, int> point_index;
  for (const int track_id : used_tracks) {
    point_index[track_id] = static_cast<int>(point_ids_.size());
    point_ids_.push_back(track_id);
    points_.push_back(scene.points.at(track_id).position);
  }

  for (const MergedCamera& camera : scene.cameras) {
    cameras_.push_back({camera.background_pose.intrinsics, camera.background_pose.rotation,
                        camera.background_pose.center, camera.take_id, 6, 0});
  }

  // Gauge: freeze the first reference-take camera; constrain the second one's
  // center to the sphere around the first.
  for (size_t i = 0; i < cameras_.size(); ++i) {
    if (cameras_[i].take_id == scene.reference_take) {
      if (frozen_camera_ < 0) {
        frozen_camera_ = static_cast<int>(i);
      } else if (scale_camera_ < 0) {
        scale_camera_ = static_cast<int>(i);
        break;
      }
    }
  }
  if (frozen_camera_ < 0) {
    frozen_camera_ = 0;
    if (cameras_.size() > 1) {
      scale_camera_ = 1;
    }
  }
  cameras_[static_cast<size_t>(frozen_camera_)].dim = 0;
  scale_anchor_ = cameras_[static_cast<size_t>(frozen_camera_)].center;
  if (scale_camera_ >= 0) {
    if ((cameras_[static_cast<size_t>(scale_camera_)].center - scale_anchor_).norm() > 1e-9) {
      cameras_[static_cast<size_t>(scale_camera_)].dim = 5;
    } else {
      scale_camera_ = -1;  // coincident centers cannot carry the scale gauge
    }
  }

  // Motion blocks: takes other than the reference with foreground residuals.
  std::set<int> motion_needed;
  for (const MergedObservation& obs : scene.observations) {
    const auto point = scene.points.find(obs.track_id);
    if (point == scene.points.end() || point->second.label != Label::kForeground) {
      continue;
    }
    const int take_id = scene.cameras[static_cast<size_t>(obs.camera_index)].take_id;
    if (take_id != scene.reference_take) {
      motion_needed.insert(take_id);
    }
  }
  std::map<int, int> motion_index;
  for (const int take_id : motion_needed) {
    motion_index[take_id] = static_cast<int>(motion_takes_.size());
    motion_takes_.push_back(take_id);
    const auto it = scene.foreground_motions.find(take_id);
    motions_.push_back(it == scene.foreground_motions.end() ? RigidMotion{} : it->second);
  }

  int offset = 0;
  for (Camera& camera : cameras_) {
    camera.offset = offset;
    offset += camera.dim;
  }
  camera_side_dim_ = offset + 6 * static_cast<int>(motion_takes_.size());

  for (const MergedObservation& obs : scene.observations) {
    const auto point = scene.points.find(obs.track_id);
    if (point == scene.points.end() || point->second.label == Label::kUnknown) {
      continue;  // unknown-labeled observations carry a constant error
    }
    Residual res;
    res.camera = obs.camera_index;
    res.point = point_index.at(obs.track_id);
    res.observed = obs.pixel;
    if (point->second.label == Label::kForeground) {
      const int take_id = scene.cameras[static_cast<size_t>(obs.camera_index)].take_id;
      res.motion = take_id == scene.reference_take ? -1 : motion_index.at(take_id);
    }
    residuals_.push_back(res);
  }
}

Vec2 BAProblem::evaluate_with(const Residual& res, const Rotation3& cam_r, const Vec3& cam_c,
                              const Rotation3& mot_r, const Vec3& mot_t,
                              const Vec3& point) const {
  const Vec3 moved = res.motion >= 0 ? mot_r * point + mot_t : point;
  const Vec3 u = cam_r * (moved - cam_c);
  const Intrinsics& k = cameras_[static_cast<size_t>(res.camera)].intrinsics;
  if (u.z() <= kMinProjectionDepth) {
    // A huge constant residual steers the optimizer away without a throw.
    return Vec2{1e6, 1e6};
  }
  return Vec2{k.fx * u.x() / u.z() + k.cx - res.observed.x(),
              k.fy * u.y() / u.z() + k.cy - res.observed.y()};
}

Vec2 BAProblem::evaluate(const Residual& res) const {
  const Camera& camera = cameras_[static_cast<size_t>(res.camera)];
  static const Rotation3 kIdentity;
  const Rotation3& mot_r = res.motion >= 0 ? motions_[static_cast<size_t>(res.motion)].rotation
                                           : kIdentity;
  const Vec3 mot_t =
      res.motion >= 0 ? motions_[static_cast<size_t>(res.motion)].translation : Vec3::Zero();
  return evaluate_with(res, camera.rotation, camera.center, mot_r, mot_t,
                       points_[static_cast<size_t>(res.point)]);
}

double BAProblem::robust_weight(double squared_norm) const {
  if (!options_.robust) {
    return 1.0;
  }
  const double norm = std::sqrt(squared_norm);
  if (norm <= options_.huber_scale) {
    return 1.0;
  }
  return std::sqrt(options_.huber_scale / norm);
}

double BAProblem::total_cost() const {
  double cost = 0.0;
  for (const Residual& res : residuals_) {
    const double s = evaluate(res).squaredNorm();
    if (options_.robust) {
      const double norm = std::sqrt(s);
      cost += norm <= options_.huber_scale
                  ? s
                  : options_.huber_scale * (2.0 * norm - options_.huber_scale);
    } else {
      cost += s;
    }
  }
  return cost;
}

double BAProblem::cost() const { return total_cost(); }

double BAProblem::median_reprojection() const {
  std::vector<double> norms;
  norms.reserve(residuals_.size());
  for (const Residual& res : residuals_) {
    norms.push_back(evaluate(res).norm());
  }
  return median_of(std::move(norms));
}

Eigen::Matrix<double, 3, 2> BAProblem::scale_tangent_basis() const {
  const Vec3 offset = cameras_[static_cast<size_t>(scale_camera_)].center - scale_anchor_;
  const Vec3 axis = offset.normalized();
  Vec3 helper = std::abs(axis.x()) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  Eigen::Matrix<double, 3, 2> basis;
  basis.col(0) = axis.cross(helper).normalized();
  basis.col(1) = axis.cross(basis.col(0)).normalized();
  return basis;
}

BAReport BAProblem::solve(const BAOptions& options) {
  options_ = options;
  BAReport report;
  report.initial_cost = total_cost();
  report.cost_history.push_back(report.initial_cost);

  const int n_cams = static_cast<int>(cameras_.size());
  const int n_motions = static_cast<int>(motion_takes_.size());
  const int motion_offset_base = camera_side_dim_ - 6 * n_motions;
  const int nc = camera_side_dim_;

  double cost = report.initial_cost;
  double damping = 1e-6;
  std::string termination = "max iterations reached";
  bool converged = false;
  // Residuals below ~1e-9 px are floating-point noise; their summed squares
  // bound the smallest meaningful cost.
  const double cost_floor = 1e-18 * static_cast<double>(residuals_.size());

  for (int iteration = 0; iteration < options.max_iterations; ++iteration) {
    if (cost <= cost_floor) {
      termination = "cost at numerical floor";
      converged = true;
      break;
    }
    // Assemble the normal equations, points kept separable.
    Eigen::MatrixXd h_cc = Eigen::MatrixXd::Zero(nc, nc);
    Eigen::VectorXd g_c = Eigen::VectorXd::Zero(nc);
    std::vector<Mat3> v_p(points_.size(), Mat3::Zero());
    std::vector<Vec3> g_p(points_.size(), Vec3::Zero());
    // Per point: camera-side blocks (offset, dim, dim x 3 matrix).
    struct WBlock {
      int offset;
      int dim;
      Eigen::Matrix<double, 6, 3> m;
    };
    std::vector<std::vector<WBlock>> w_p(points_.size());

    const Eigen::Matrix<double, 3, 2> tangent =
        scale_camera_ >= 0 ? scale_tangent_basis() : Eigen::Matrix<double, 3, 2>::Zero();

    double gradient_norm = 0.0;
    for (const Residual& res : residuals_) {
      const Camera& camera = cameras_[static_cast<size_t>(res.camera)];
      const Vec3& point = points_[static_cast<size_t>(res.point)];
      const bool has_motion = res.motion >= 0;
      const RigidMotion motion =
          has_motion ? motions_[static_cast<size_t>(res.motion)] : RigidMotion{};

      const Vec3 moved = has_motion ? motion.apply(point) : point;
      const Vec3 u = camera.rotation * (moved - camera.center);
      if (u.z() <= kMinProjectionDepth) {
        continue;  // cheirality-violating residuals do not steer the step
      }
      const Intrinsics& k = camera.intrinsics;
      Vec2 residual{k.fx * u.x() / u.z() + k.cx - res.observed.x(),
                    k.fy * u.y() / u.z() + k.cy - res.observed.y()};
      Eigen::Matrix<double, 2, 3> d_pix;
      d_pix << k.fx / u.z(), 0.0, -k.fx * u.x() / (u.z() * u.z()),
               0.0, k.fy / u.z(), -k.fy * u.y() / (u.z() * u.z());

      const double w = robust_weight(residual.squaredNorm());
      if (w != 1.0) {
        residual *= w;
        d_pix *= w;
      }

      // Point block.
      const Eigen::Matrix<double, 2, 3> j_point =
          has_motion ? (d_pix * (camera.rotation.matrix() * motion.rotation.matrix())).eval()
                     : (d_pix * camera.rotation.matrix()).eval();

      // Camera block in its reduced parameterization.
      Eigen::Matrix<double, 2, 6> j_cam_full;
      j_cam_full.block<2, 3>(0, 0) = d_pix * (-skew(u));
      j_cam_full.block<2, 3>(0, 3) = d_pix * (-camera.rotation.matrix());
      Eigen::Matrix<double, 2, 6> j_cam = Eigen::Matrix<double, 2, 6>::Zero();
      int cam_dim = camera.dim;
      if (camera.dim == 6) {
        j_cam = j_cam_full;
      } else if (camera.dim == 5) {
        j_cam.block<2, 3>(0, 0) = j_cam_full.block<2, 3>(0, 0);
        const Vec3 offset_vec = camera.center - scale_anchor_;
        j_cam.block<2, 2>(0, 3) =
            j_cam_full.block<2, 3>(0, 3) * (-skew(offset_vec)) * tangent;
      }

      Eigen::Matrix<double, 2, 6> j_motion = Eigen::Matrix<double, 2, 6>::Zero();
      if (has_motion) {
        j_motion.block<2, 3>(0, 0) =
            d_pix * camera.rotation.matrix() * (-skew(motion.rotation * point));
        j_motion.block<2, 3>(0, 3) = d_pix * camera.rotation.matrix();
      }

      // Accumulate.
      const int p = res.point;
      v_p[static_cast<size_t>(p)] += j_point.transpose() * j_point;
      g_p[static_cast<size_t>(p)] += j_point.transpose() * residual;

      const auto add_cam_block = [&](int offset, int dim,
                                     const Eigen::Matrix<double, 2, 6>& j) {
        if (dim == 0) {
          return;
        }
        h_cc.block(offset, offset, dim, dim) +=
            j.leftCols(dim).transpose() * j.leftCols(dim);
        g_c.segment(offset, dim) += j.leftCols(dim).transpose() * residual;
        bool found = false;
        for (WBlock& block : w_p[static_cast<size_t>(p)]) {
          if (block.offset == offset) {
            block.m.topRows(dim) += j.leftCols(dim).transpose() * j_point;
            found = true;
            break;
          }
        }
        if (!found) {
          WBlock block{offset, dim, Eigen::Matrix<double, 6, 3>::Zero()};
          block.m.topRows(dim) = j.leftCols(dim).transpose() * j_point;
          w_p[static_cast<size_t>(p)].push_back(block);
        }
      };
      add_cam_block(camera.offset, cam_dim, j_cam);
      if (has_motion) {
        add_cam_block(motion_offset_base + 6 * res.motion, 6, j_motion);
        // Cross term between the camera and motion blocks of this residual.
        if (cam_dim > 0) {
          h_cc.block(camera.offset, motion_offset_base + 6 * res.motion, cam_dim, 6) +=
              j_cam.leftCols(cam_dim).transpose() * j_motion;
          h_cc.block(motion_offset_base + 6 * res.motion, camera.offset, 6, cam_dim) +=
              j_motion.transpose() * j_cam.leftCols(cam_dim);
        }
      }
    }
    for (int i = 0; i < nc; ++i) {
      gradient_norm = std::max(gradient_norm, std::abs(g_c(i)));
    }
    for (size_t p = 0; p < points_.size(); ++p) {
      gradient_norm = std::max(gradient_norm, g_p[p].cwiseAbs().maxCoeff());
    }

    if (gradient_norm < options.gradient_tolerance) {
      termination = "gradient tolerance reached";
      converged = true;
      break;
    }

    // Damped solve, retried with increasing damping until a step is accepted.
    bool accepted = false;
    while (damping <= options.max_damping) {
      Eigen::MatrixXd s = h_cc;
      for (int i = 0; i < nc; ++i) {
        s(i, i) += damping * h_cc(i, i) + 1e-12;
      }
      Eigen::VectorXd rhs = -g_c;
      std::vector<Mat3> v_inv(points_.size());
      for (size_t p = 0; p < points_.size(); ++p) {
        Mat3 v = v_p[p];
        v.diagonal() += damping * v_p[p].diagonal() + Vec3::Constant(1e-12);
        v_inv[p] = v.inverse();
        for (const WBlock& a : w_p[p]) {
          rhs.segment(a.offset, a.dim) +=
              a.m.topRows(a.dim) * (v_inv[p] * g_p[p]);
          for (const WBlock& b : w_p[p]) {
            s.block(a.offset, b.offset, a.dim, b.dim) -=
                a.m.topRows(a.dim) * v_inv[p] * b.m.topRows(b.dim).transpose();
          }
        }
      }
      const Eigen::VectorXd delta_c = s.ldlt().solve(rhs);

      // Trial state.
      std::vector<Vec3> trial_points = points_;
      std::vector<Camera> trial_cameras = cameras_;
      std::vector<RigidMotion> trial_motions = motions_;
      for (int c = 0; c < n_cams; ++c) {
        Camera& camera = trial_cameras[static_cast<size_t>(c)];
        if (camera.dim == 6) {
          camera.rotation =
              Rotation3::from_axis_angle(delta_c.segment<3>(camera.offset)) * camera.rotation;
          camera.center += delta_c.segment<3>(camera.offset + 3);
        } else if (camera.dim == 5) {
          camera.rotation =
              Rotation3::from_axis_angle(delta_c.segment<3>(camera.offset)) * camera.rotation;
          const Vec3 offset_vec = camera.center - scale_anchor_;
          const Vec3 w_rot = tangent * delta_c.segment<2>(camera.offset + 3);
          camera.center = scale_anchor_ + Rotation3::from_axis_angle(w_rot) * offset_vec;
        }
      }
      for (int m = 0; m < n_motions; ++m) {
        RigidMotion& motion = trial_motions[static_cast<size_t>(m)];
        motion.rotation =
            Rotation3::from_axis_angle(delta_c.segment<3>(motion_offset_base + 6 * m)) *
            motion.rotation;
        motion.translation += delta_c.segment<3>(motion_offset_base + 6 * m + 3);
      }
      for (size_t p = 0; p < points_.size(); ++p) {
        Vec3 delta_p = Vec3::Zero();
        Vec3 correction = g_p[p];
        for (const WBlock& a : w_p[p]) {
          correction += a.m.topRows(a.dim).transpose() * delta_c.segment(a.offset, a.dim);
        }
        delta_p = -(v_inv[p] * correction);
        trial_points[p] += delta_p;
      }

      std::swap(points_, trial_points);
      std::swap(cameras_, trial_cameras);
      std::swap(motions_, trial_motions);
      const double trial_cost = total_cost();
      if (trial_cost < cost) {
        cost = trial_cost;
        damping = std::max(damping / 3.0, 1e-12);
        accepted = true;
        report.cost_history.push_back(cost);
        ++report.iterations;
      } else {
        std::swap(points_, trial_points);
        std::swap(cameras_, trial_cameras);
        std::swap(motions_, trial_motions);
        damping *= 4.0;
      }
      if (accepted) {
        break;
      }
    }
    if (!accepted) {
      termination = damping > options.max_damping
                        ? "damping exceeded the safeguard; best state returned"
                        : "no acceptable step";
      break;
    }

    const double previous = report.cost_history[report.cost_history.size() - 2];
    if (previous - cost < options.function_tolerance * std::max(previous, 1e-300)) {
      termination = "function tolerance reached";
      converged = true;
      break;
    }
  }

  report.final_cost = cost;
  report.converged = converged;
  report.termination = termination;
  report.median_reproj_px = median_reprojection();
  return report;
}

LabeledScene BAProblem::current_scene() const {
  LabeledScene out = scene_;
  for (size_t i = 0; i < point_ids_.size(); ++i) {
    out.points.at(point_ids_[i]).position = points_[i];
  }
  for (size_t c = 0; c < cameras_.size(); ++c) {
    MergedCamera& camera = out.cameras[c];
    camera.background_pose.rotation = cameras_[c].rotation;
    camera.background_pose.center = cameras_[c].center;
  }
  for (size_t m = 0; m < motion_takes_.size(); ++m) {
    out.foreground_motions[motion_takes_[m]] = motions_[m];
  }
  // Foreground poses follow the refined background poses and motions.
  for (MergedCamera& camera : out.cameras) {
    const auto it = out.foreground_motions.find(camera.take_id);
    const RigidMotion motion = it == out.foreground_motions.end() ? RigidMotion{} : it->second;
    camera.foreground_pose.intrinsics = camera.background_pose.intrinsics;
    camera.foreground_pose.rotation = camera.background_pose.rotation * motion.rotation;
    camera.foreground_pose.center = invert_motion(motion).apply(camera.background_pose.center);
  }
  return out;
}

double BAProblem::check_gradients(double step, int samples, Rng& rng) const {
  if (residuals_.empty()) {
    return 0.0;
  }
  const Eigen::Matrix<double, 3, 2> tangent =
      scale_camera_ >= 0 ? scale_tangent_basis() : Eigen::Matrix<double, 3, 2>::Zero();

  double max_error = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Residual& res =
        residuals_[static_cast<size_t>(rng.uniform_int(static_cast<int>(residuals_.size())))];
    const Camera& camera = cameras_[static_cast<size_t>(res.camera)];
    const Vec3& point = points_[static_cast<size_t>(res.point)];
    const bool has_motion = res.motion >= 0;
    const RigidMotion motion =
        has_motion ? motions_[static_cast<size_t>(res.motion)] : RigidMotion{};

    const Vec3 moved = has_motion ? motion.apply(point) : point;
    const Vec3 u = camera.rotation * (moved - camera.center);
    if (u.z() <= kMinProjectionDepth) {
      continue;
    }
    const Intrinsics& k = camera.intrinsics;
    Eigen::Matrix<double, 2, 3> d_pix;
    d_pix << k.fx / u.z(), 0.0, -k.fx * u.x() / (u.z() * u.z()),
             0.0, k.fy / u.z(), -k.fy * u.y() / (u.z() * u.z());

    const Eigen::Matrix<double, 2, 3> j_point =
        has_motion ? (d_pix * (camera.rotation.matrix() * motion.rotation.matrix())).eval()
                   : (d_pix * camera.rotation.matrix()).eval();
    Eigen::Matrix<double, 2, 6> j_cam_full;
    j_cam_full.block<2, 3>(0, 0) = d_pix * (-skew(u));
    j_cam_full.block<2, 3>(0, 3) = d_pix * (-camera.rotation.matrix());
    Eigen::Matrix<double, 2, 6> j_motion = Eigen::Matrix<double, 2, 6>::Zero();
    if (has_motion) {
      j_motion.block<2, 3>(0, 0) =
          d_pix * camera.rotation.matrix() * (-skew(motion.rotation * point));
      j_motion.block<2, 3>(0, 3) = d_pix * camera.rotation.matrix();
    }

    const auto relative_error = [](const Vec2& analytic, const Vec2& numeric) {
      double err = 0.0;
      for (int i = 0; i < 2; ++i) {
        err = std::max(err, std::abs(analytic(i) - numeric(i)) /
                                std::max({1.0, std::abs(analytic(i)), std::abs(numeric(i))}));
      }
      return err;
    };

    // Point parameters.
    for (int d = 0; d < 3; ++d) {
      Vec3 plus = point, minus = point;
      plus(d) += step;
      minus(d) -= step;
      const Vec2 numeric = (evaluate_with(res, camera.rotation, camera.center, motion.rotation,
                                          motion.translation, plus) -
                            evaluate_with(res, camera.rotation, camera.center, motion.rotation,
                                          motion.translation, minus)) /
                           (2.0 * step);
      max_error = std::max(max_error, relative_error(j_point.col(d), numeric));
    }
    // Camera parameters in the reduced parameterization.
    if (camera.dim > 0) {
      for (int d = 0; d < 3; ++d) {
        Vec3 axis = Vec3::Zero();
        axis(d) = step;
        const Rotation3 plus = Rotation3::from_axis_angle(axis) * camera.rotation;
        const Rotation3 minus = Rotation3::from_axis_angle(-axis) * camera.rotation;
        const Vec2 numeric =
            (evaluate_with(res, plus, camera.center, motion.rotation, motion.translation, point) -
             evaluate_with(res, minus, camera.center, motion.rotation, motion.translation,
                           point)) /
            (2.0 * step);
        max_error = std::max(max_error, relative_error(j_cam_full.col(d), numeric));
      }
      if (camera.dim == 6) {
        for (int d = 0; d < 3; ++d) {
          Vec3 plus = camera.center, minus = camera.center;
          plus(d) += step;
          minus(d) -= step;
          const Vec2 numeric = (evaluate_with(res, camera.rotation, plus, motion.rotation,
                                              motion.translation, point) -
                                evaluate_with(res, camera.rotation, minus, motion.rotation,
                                              motion.translation, point)) /
                               (2.0 * step);
          max_error = std::max(max_error, relative_error(j_cam_full.col(3 + d), numeric));
        }
      } else {
        const Vec3 offset_vec = camera.center - scale_anchor_;
        const Eigen::Matrix<double, 2, 2> j_tangent =
            j_cam_full.block<2, 3>(0, 3) * (-skew(offset_vec)) * tangent;
        for (int d = 0; d < 2; ++d) {
          const Vec3 w_plus = tangent.col(d) * step;
          const Vec3 center_plus =
              scale_anchor_ + Rotation3::from_axis_angle(w_plus) * offset_vec;
          const Vec3 center_minus =
              scale_anchor_ + Rotation3::from_axis_angle(-w_plus) * offset_vec;
          const Vec2 numeric = (evaluate_with(res, camera.rotation, center_plus, motion.rotation,
                                              motion.translation, point) -
                                evaluate_with(res, camera.rotation, center_minus, motion.rotation,
                                              motion.translation, point)) /
                               (2.0 * step);
          max_error = std::max(max_error, relative_error(j_tangent.col(d), numeric));
        }
      }
    }
    // Motion parameters.
    if (has_motion) {
      for (int d = 0; d < 3; ++d) {
        Vec3 axis = Vec3::Zero();
        axis(d) = step;
        const Rotation3 plus = Rotation3::from_axis_angle(axis) * motion.rotation;
        const Rotation3 minus = Rotation3::from_axis_angle(-axis) * motion.rotation;
        const Vec2 numeric =
            (evaluate_with(res, camera.rotation, camera.center, plus, motion.translation, point) -
             evaluate_with(res, camera.rotation, camera.center, minus, motion.translation,
                           point)) /
            (2.0 * step);
        max_error = std::max(max_error, relative_error(j_motion.col(d), numeric));
      }
      for (int d = 0; d < 3; ++d) {
        Vec3 plus = motion.translation, minus = motion.translation;
        plus(d) += step;
        minus(d) -= step;
        const Vec2 numeric = (evaluate_with(res, camera.rotation, camera.center, motion.rotation,
                                            plus, point) -
                              evaluate_with(res, camera.rotation, camera.center, motion.rotation,
                                            minus, point)) /
                             (2.0 * step);
        max_error = std::max(max_error, relative_error(j_motion.col(3 + d), numeric));
      }
    }
  }
  return max_error;
}

}  // namespace tbsfm
