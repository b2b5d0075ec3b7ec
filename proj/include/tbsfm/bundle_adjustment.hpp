#pragma once

#include <string>
#include <vector>

#include "tbsfm/merging.hpp"
#include "tbsfm/random.hpp"

namespace tbsfm {

struct BAOptions {
  int max_iterations = 100;
  double function_tolerance = 1e-9;   // relative cost decrease
  double gradient_tolerance = 1e-10;  // infinity norm of J^T r
  double max_damping = 1e12;          // divergence safeguard
  bool robust = false;                // Huber loss on the residual norm
  double huber_scale = 8.0;           // 2 * tau by default
};

struct BAReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;  // accepted steps
  double median_reproj_px = 0.0;
  bool converged = false;
  std::string termination;
  std::vector<double> cost_history;  // cost after each accepted step
};

// Joint refinement of track positions, per-image background poses, and one
// foreground motion per take. A foreground observation projects through its
// camera's background pose composed with the take's shared motion, so all
// cameras of a take move the foreground identically by construction.
// Unknown-labeled observations carry a constant error and are excluded.
//
// Gauge: the first reference-take camera is frozen and the second one's
// center moves on the sphere around the first, fixing the scale as the
// distance between the two.
class BAProblem {
 public:
  explicit BAProblem(const LabeledScene& scene, const BAOptions& options = {});

  int residual_count() const { return static_cast<int>(residuals_.size()); }
  int point_count() const { return static_cast<int>(points_.size()); }
  int motion_block_count() const { return static_cast<int>(motion_takes_.size()); }

  double cost() const;
  double median_reprojection() const;

  BAReport solve(const BAOptions& options);

  // Current state written back into a copy of the input scene.
  LabeledScene current_scene() const;

  // Max relative error between analytic Jacobians and central finite
  // differences with the given step, over `samples` randomly chosen residuals.
  double check_gradients(double step, int samples, Rng& rng) const;

 private:
  struct Camera {
    Intrinsics intrinsics;
    Rotation3 rotation;
    Vec3 center = Vec3::Zero();
    int take_id = 0;
    int dim = 6;       // 0 frozen, 5 scale-constrained, 6 free
    int offset = 0;    // into the camera-side parameter vector
  };
  struct Residual {
    int camera = 0;
    int motion = -1;  // index into motion blocks; -1 for background / reference take
    int point = 0;
    Vec2 observed = Vec2::Zero();
  };

  Vec2 evaluate(const Residual& res) const;
  Vec2 evaluate_with(const Residual& res, const Rotation3& cam_r, const Vec3& cam_c,
                     const Rotation3& mot_r, const Vec3& mot_t, const Vec3& point) const;
  double total_cost() const;
  double robust_weight(double squared_norm) const;

  // Tangent basis of the scale-constrained center, recomputed per iteration.
  Eigen::Matrix<double, 3, 2> scale_tangent_basis() const;

  LabeledScene scene_;
  BAOptions options_;

  std::vector<int> point_ids_;
  std::vector<Vec3> points_;
  std::vector<Camera> cameras_;
  std::vector<int> motion_takes_;
  std::vector<RigidMotion> motions_;
  std::vector<Residual> residuals_;

  int frozen_camera_ = -1;
  int scale_camera_ = -1;
  Vec3 scale_anchor_ = Vec3::Zero();  // frozen camera center
  int camera_side_dim_ = 0;
};

}  // namespace tbsfm
