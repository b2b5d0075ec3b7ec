#include "tbsfm/geometry.hpp"

#include <cmath>

namespace tbsfm {

bool Rotation3::is_rotation(const Mat3& m, double tol) {
  const Mat3 gram = m.transpose() * m - Mat3::Identity();
  return gram.cwiseAbs().maxCoeff() <= tol && std::abs(m.determinant() - 1.0) <= tol;
}

Rotation3 Rotation3::from_matrix(const Mat3& m) {
  if (!is_rotation(m)) {
    throw std::invalid_argument("matrix is not a rotation");
  }
  return Rotation3(m);
}

Rotation3 Rotation3::project_to_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return Rotation3(r);
}

Rotation3 Rotation3::from_quaternion(double w, double x, double y, double z) {
  Eigen::Quaterniond q(w, x, y, z);
  const double n = q.norm();
  if (!(n > 0.0)) {
    throw std::invalid_argument("zero quaternion");
  }
  q.coeffs() /= n;
  return Rotation3(q.toRotationMatrix());
}

Rotation3 Rotation3::from_axis_angle(const Vec3& v) {
  const double angle = v.norm();
  if (angle == 0.0) {
    return Rotation3();
  }
  return Rotation3(Eigen::AngleAxisd(angle, v / angle).toRotationMatrix());
}

Vec3 Rotation3::axis_angle() const {
  const Eigen::AngleAxisd aa(m_);
  return aa.angle() * aa.axis();
}

Eigen::Quaterniond Rotation3::quaternion() const {
  Eigen::Quaterniond q(m_);
  if (q.w() < 0.0 || (q.w() == 0.0 && (q.x() < 0.0 || (q.x() == 0.0 && (q.y() < 0.0 || (q.y() == 0.0 && q.z() < 0.0)))))) {
    q.coeffs() = -q.coeffs();
  }
  return q;
}

bool RigidMotion::is_identity(double tol) const {
  return (rotation.matrix() - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         translation.cwiseAbs().maxCoeff() <= tol;
}

Vec2 project(const CameraPose& pose, const Vec3& point) {
  const Vec3 u = pose.rotation * (point - pose.center);
  if (u.z() <= kMinProjectionDepth) {
    throw CheiralityError(u.z());
  }
  const Intrinsics& k = pose.intrinsics;
  return {k.fx * u.x() / u.z() + k.cx, k.fy * u.y() / u.z() + k.cy};
}

std::optional<Vec2> try_project(const CameraPose& pose, const Vec3& point) {
  const Vec3 u = pose.rotation * (point - pose.center);
  if (u.z() <= kMinProjectionDepth) {
    return std::nullopt;
  }
  const Intrinsics& k = pose.intrinsics;
  return Vec2{k.fx * u.x() / u.z() + k.cx, k.fy * u.y() / u.z() + k.cy};
}

double reprojection_error(const CameraPose& pose,
                          const RigidMotion& motion,
                          const Vec3& point,
                          const Vec2& obs) {
  return (project(pose, motion.apply(point)) - obs).norm();
}

RigidMotion compose_motion(const RigidMotion& to_s, const RigidMotion& to_t) {
  const Rotation3 a = to_t.rotation * to_s.rotation.inverse();
  return {a, to_t.translation - a * to_s.translation};
}

SimilarityTransform compose_similarity(const SimilarityTransform& to_s,
                                       const SimilarityTransform& to_t) {
  const Rotation3 b = to_t.rotation * to_s.rotation.inverse();
  const double beta = to_t.scale / to_s.scale;
  return {b, to_t.translation - beta * (b * to_s.translation), beta};
}

RigidMotion invert_motion(const RigidMotion& m) {
  const Rotation3 inv = m.rotation.inverse();
  return {inv, -(inv * m.translation)};
}

SimilarityTransform invert_similarity(const SimilarityTransform& s) {
  const Rotation3 inv = s.rotation.inverse();
  return {inv, -(inv * s.translation) / s.scale, 1.0 / s.scale};
}

RigidMotion chain_motion(const RigidMotion& outer, const RigidMotion& inner) {
  return {outer.rotation * inner.rotation, outer.rotation * inner.translation + outer.translation};
}

SimilarityTransform chain_similarity(const SimilarityTransform& outer,
                                     const SimilarityTransform& inner) {
  return {outer.rotation * inner.rotation,
          outer.scale * (outer.rotation * inner.translation) + outer.translation,
          outer.scale * inner.scale};
}

SimilarityTransform chain_similarity_motion(const SimilarityTransform& outer,
                                            const RigidMotion& inner) {
  return chain_similarity(outer, SimilarityTransform{inner.rotation, inner.translation, 1.0});
}

SimilarityTransform chain_motion_similarity(const RigidMotion& outer,
                                            const SimilarityTransform& inner) {
  return chain_similarity(SimilarityTransform{outer.rotation, outer.translation, 1.0}, inner);
}

RigidMotion motion_in_frame(const RigidMotion& m, const SimilarityTransform& frame) {
  // frame o m o frame^-1 is rigid: the scales cancel.
  const Rotation3 a = frame.rotation * m.rotation * frame.rotation.inverse();
  const Vec3 t = frame.scale * (frame.rotation * m.translation) + frame.translation -
                 a * frame.translation;
  return {a, t};
}

CameraPose transform_pose(const CameraPose& pose, const SimilarityTransform& s) {
  return {pose.intrinsics, pose.rotation * s.rotation.inverse(), s.apply(pose.center)};
}

double rotation_geodesic_distance(const Rotation3& r1, const Rotation3& r2) {
  const Mat3 rel = r1.matrix().transpose() * r2.matrix();
  // atan2 form is accurate near 0 and pi.
  const Vec3 axis_sin{rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1)};
  return std::atan2(0.5 * axis_sin.norm(), 0.5 * (rel.trace() - 1.0));
}

}  // namespace tbsfm
