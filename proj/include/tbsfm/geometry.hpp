#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>

namespace tbsfm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Depth below this threshold counts as a cheirality violation.
inline constexpr double kMinProjectionDepth = 1e-12;
// Orthonormality / determinant tolerance for rotation matrices.
inline constexpr double kRotationTolerance = 1e-9;

class CheiralityError : public std::runtime_error {
 public:
  explicit CheiralityError(double depth)
      : std::runtime_error("point behind camera (depth " + std::to_string(depth) + ")") {}
};

// 3x3 rotation matrix; orthonormal with determinant +1.
class Rotation3 {
 public:
  Rotation3() : m_(Mat3::Identity()) {}

  // Validates the invariants; throws std::invalid_argument otherwise.
  static Rotation3 from_matrix(const Mat3& m);
  // Nearest rotation in Frobenius norm (SVD projection).
  static Rotation3 project_to_rotation(const Mat3& m);
  static Rotation3 from_quaternion(double w, double x, double y, double z);
  // Rotation by |v| radians about v / |v|; v = 0 gives the identity.
  static Rotation3 from_axis_angle(const Vec3& v);

  const Mat3& matrix() const { return m_; }
  Rotation3 inverse() const { return Rotation3(m_.transpose()); }
  Vec3 axis_angle() const;
  // Unit quaternion with canonical sign (w >= 0).
  Eigen::Quaterniond quaternion() const;

  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  Rotation3 operator*(const Rotation3& o) const { return Rotation3(m_ * o.m_); }

  static bool is_rotation(const Mat3& m, double tol = kRotationTolerance);

 private:
  explicit Rotation3(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

// Rigid motion x -> A x + a.
struct RigidMotion {
  Rotation3 rotation;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  bool is_identity(double tol = 1e-12) const;
};

// Similarity x -> scale * B x + b, scale > 0.
struct SimilarityTransform {
  Rotation3 rotation;
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

// Pinhole camera; x = K pi(R (X - c)) with R world-to-camera and c the center.
struct CameraPose {
  Intrinsics intrinsics;
  Rotation3 rotation;
  Vec3 center = Vec3::Zero();
};

// Projects a point in front of the camera to pixels; throws CheiralityError.
Vec2 project(const CameraPose& pose, const Vec3& point);
// Non-throwing variant for sampling loops; empty on cheirality violation.
std::optional<Vec2> try_project(const CameraPose& pose, const Vec3& point);

// Pixel distance between obs and the projection of the moved point A X + a.
// Callers substitute a constant for unknown-labeled points instead of calling this.
double reprojection_error(const CameraPose& pose,
                          const RigidMotion& motion,
                          const Vec3& point,
                          const Vec2& obs);

// Motion from take s to take t, both given from the initial configuration:
// (A_t A_s^-1, a_t - A_t A_s^-1 a_s).
RigidMotion compose_motion(const RigidMotion& to_s, const RigidMotion& to_t);

// Coordinate change from system s to system t, both given from the common frame:
// (B_t B_s^-1, b_t - (beta_t / beta_s) B_t B_s^-1 b_s, beta_t / beta_s).
SimilarityTransform compose_similarity(const SimilarityTransform& to_s,
                                       const SimilarityTransform& to_t);

RigidMotion invert_motion(const RigidMotion& m);
SimilarityTransform invert_similarity(const SimilarityTransform& s);

// Plain composition outer(inner(x)).
RigidMotion chain_motion(const RigidMotion& outer, const RigidMotion& inner);
SimilarityTransform chain_similarity(const SimilarityTransform& outer,
                                     const SimilarityTransform& inner);
// Motion followed by a similarity, as one similarity: x -> (S o m)(x).
SimilarityTransform chain_similarity_motion(const SimilarityTransform& outer,
                                            const RigidMotion& inner);
// Similarity followed by a motion: x -> (m o S)(x).
SimilarityTransform chain_motion_similarity(const RigidMotion& outer,
                                            const SimilarityTransform& inner);

// Expresses a motion in the frame reached by `frame`: frame o m o frame^-1.
RigidMotion motion_in_frame(const RigidMotion& m, const SimilarityTransform& frame);

// Pose of the same physical camera after the scene coordinates change by S:
// R -> R B^-1, c -> S(c). Projections of corresponding points are unchanged.
CameraPose transform_pose(const CameraPose& pose, const SimilarityTransform& s);

// Angle of r1^T r2 in [0, pi].
double rotation_geodesic_distance(const Rotation3& r1, const Rotation3& r2);

}  // namespace tbsfm
