#include "tbsfm/geometry.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "test_support.hpp"

namespace tbsfm {
namespace {

using test::random_inward_pose;
using test::random_motion;
using test::random_rotation;
using test::random_similarity;
using test::random_unit;

// Independent projection oracle: dehomogenized 3x4 camera matrix P = K [R | -Rc].
Vec2 matrix_projection_oracle(const CameraPose& pose, const Vec3& point) {
  Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
  k(0, 0) = pose.intrinsics.fx;
  k(1, 1) = pose.intrinsics.fy;
  k(0, 2) = pose.intrinsics.cx;
  k(1, 2) = pose.intrinsics.cy;
  Eigen::Matrix<double, 3, 4> p;
  p.leftCols<3>() = pose.rotation.matrix();
  p.col(3) = -(pose.rotation.matrix() * pose.center);
  p = k * p;
  const Eigen::Vector4d x{point.x(), point.y(), point.z(), 1.0};
  const Vec3 h = p * x;
  return {h.x() / h.z(), h.y() / h.z()};
}

TEST(Project, OpticalAxis) {
  CameraPose pose;  // identity, K = (1, 1, 0, 0)
  const Vec2 pixel = project(pose, {0.0, 0.0, 1.0});
  EXPECT_NEAR(pixel.x(), 0.0, 1e-15);
  EXPECT_NEAR(pixel.y(), 0.0, 1e-15);
}

TEST(Project, HandComputedIntrinsics) {
  CameraPose pose;
  pose.intrinsics = {2.0, 2.0, 3.0, 4.0};
  const Vec2 pixel = project(pose, {1.0, 1.0, 2.0});
  EXPECT_NEAR(pixel.x(), 4.0, 1e-15);
  EXPECT_NEAR(pixel.y(), 5.0, 1e-15);
}

TEST(Project, PointBehindCameraSignalsCheirality) {
  CameraPose pose;
  EXPECT_THROW(project(pose, {0.0, 0.0, -1.0}), CheiralityError);
  EXPECT_THROW(project(pose, {0.0, 0.0, 0.0}), CheiralityError);
  EXPECT_FALSE(try_project(pose, {0.0, 0.0, 1e-13}).has_value());
}

TEST(Project, MatchesMatrixOracle) {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const CameraPose pose = random_inward_pose(rng);
    const Vec3 point = Vec3{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                            rng.uniform(-1.5, 1.5)};
    const Vec2 expected = matrix_projection_oracle(pose, point);
    const Vec2 actual = project(pose, point);
    EXPECT_NEAR(actual.x(), expected.x(), 1e-10);
    EXPECT_NEAR(actual.y(), expected.y(), 1e-10);
  }
}

TEST(Project, UnprojectRoundTrip) {
  // Back-projecting a ray and re-projecting any point on it returns the pixel.
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const CameraPose pose = random_inward_pose(rng);
    const Vec2 pixel{rng.uniform(0.0, 1600.0), rng.uniform(0.0, 1200.0)};
    const Vec3 direction =
        pose.rotation.inverse() * Vec3{(pixel.x() - pose.intrinsics.cx) / pose.intrinsics.fx,
                                       (pixel.y() - pose.intrinsics.cy) / pose.intrinsics.fy, 1.0};
    const Vec3 point = pose.center + rng.uniform(0.5, 10.0) * direction;
    const Vec2 reprojected = project(pose, point);
    EXPECT_NEAR((reprojected - pixel).norm(), 0.0, 1e-9);
  }
}

TEST(ReprojectionError, ZeroAtExactProjection) {
  Rng rng(13);
  const CameraPose pose = random_inward_pose(rng);
  const Vec3 point{0.1, -0.2, 0.3};
  const Vec2 obs = project(pose, point);
  EXPECT_NEAR(reprojection_error(pose, RigidMotion{}, point, obs), 0.0, 1e-12);
}

TEST(ReprojectionError, ThreeFourFiveTriangle) {
  Rng rng(14);
  const CameraPose pose = random_inward_pose(rng);
  const Vec3 point{0.1, -0.2, 0.3};
  const Vec2 obs = project(pose, point) + Vec2{3.0, 4.0};
  EXPECT_NEAR(reprojection_error(pose, RigidMotion{}, point, obs), 5.0, 1e-12);
}

TEST(ReprojectionError, AppliesMotionBeforeProjecting) {
  Rng rng(15);
  const CameraPose pose = random_inward_pose(rng);
  const RigidMotion motion = random_motion(rng, 0.5, 0.5);
  const Vec3 point{0.2, 0.1, -0.3};
  const Vec2 obs = project(pose, motion.apply(point));
  EXPECT_NEAR(reprojection_error(pose, motion, point, obs), 0.0, 1e-12);
}

TEST(ComposeMotion, EqualTakesGiveIdentity) {
  Rng rng(16);
  const RigidMotion m = random_motion(rng);
  const RigidMotion composed = compose_motion(m, m);
  EXPECT_TRUE(composed.is_identity(1e-12));
}

TEST(ComposeMotion, IdentitySourceReturnsTarget) {
  Rng rng(17);
  const RigidMotion target = random_motion(rng);
  const RigidMotion composed = compose_motion(RigidMotion{}, target);
  EXPECT_NEAR((composed.rotation.matrix() - target.rotation.matrix()).norm(), 0.0, 1e-15);
  EXPECT_NEAR((composed.translation - target.translation).norm(), 0.0, 1e-15);
}

TEST(ComposeMotion, PointTransportOracle) {
  // The composed motion moves a point from its take-s position to its take-t
  // position, matching direct transport through the initial configuration.
  Rng rng(18);
  for (int i = 0; i < 200; ++i) {
    const RigidMotion to_s = random_motion(rng);
    const RigidMotion to_t = random_motion(rng);
    const RigidMotion s_to_t = compose_motion(to_s, to_t);
    const Vec3 x = 3.0 * random_unit(rng);
    EXPECT_NEAR((s_to_t.apply(to_s.apply(x)) - to_t.apply(x)).norm(), 0.0, 1e-12);
  }
}

TEST(ComposeMotion, AssociativeOnRandomTriples) {
  Rng rng(19);
  for (int i = 0; i < 100; ++i) {
    const RigidMotion a = random_motion(rng);
    const RigidMotion b = random_motion(rng);
    const RigidMotion c = random_motion(rng);
    const RigidMotion left = chain_motion(chain_motion(a, b), c);
    const RigidMotion right = chain_motion(a, chain_motion(b, c));
    EXPECT_NEAR((left.rotation.matrix() - right.rotation.matrix()).norm(), 0.0, 1e-10);
    EXPECT_NEAR((left.translation - right.translation).norm(), 0.0, 1e-10);
  }
}

TEST(ComposeSimilarity, EqualGivesIdentity) {
  Rng rng(20);
  for (int i = 0; i < 100; ++i) {
    const SimilarityTransform s = random_similarity(rng);
    const SimilarityTransform composed = compose_similarity(s, s);
    EXPECT_NEAR((composed.rotation.matrix() - Mat3::Identity()).norm(), 0.0, 1e-10);
    EXPECT_NEAR(composed.translation.norm(), 0.0, 1e-10);
    EXPECT_NEAR(composed.scale, 1.0, 1e-10);
  }
}

TEST(ComposeSimilarity, IdentitySourceReturnsTarget) {
  Rng rng(21);
  const SimilarityTransform target = random_similarity(rng);
  const SimilarityTransform composed = compose_similarity(SimilarityTransform{}, target);
  EXPECT_NEAR((composed.rotation.matrix() - target.rotation.matrix()).norm(), 0.0, 1e-15);
  EXPECT_NEAR((composed.translation - target.translation).norm(), 0.0, 1e-15);
  EXPECT_NEAR(composed.scale, target.scale, 1e-15);
}

TEST(ComposeSimilarity, SequentialApplicationOracle) {
  Rng rng(22);
  for (int i = 0; i < 200; ++i) {
    const SimilarityTransform to_s = random_similarity(rng);
    const SimilarityTransform to_t = random_similarity(rng);
    const SimilarityTransform s_to_t = compose_similarity(to_s, to_t);
    const Vec3 x = 3.0 * random_unit(rng);
    EXPECT_NEAR((s_to_t.apply(to_s.apply(x)) - to_t.apply(x)).norm(), 0.0, 1e-12);
  }
}

TEST(Inversion, IdentityAndPureTranslation) {
  const RigidMotion identity_inverse = invert_motion(RigidMotion{});
  EXPECT_TRUE(identity_inverse.is_identity(1e-15));

  const RigidMotion shift{Rotation3{}, {0.0, 0.0, 5.0}};
  const RigidMotion inverse = invert_motion(shift);
  EXPECT_NEAR((inverse.translation - Vec3{0.0, 0.0, -5.0}).norm(), 0.0, 1e-15);

  const SimilarityTransform sim_identity = invert_similarity(SimilarityTransform{});
  EXPECT_NEAR(sim_identity.scale, 1.0, 1e-15);
  EXPECT_NEAR(sim_identity.translation.norm(), 0.0, 1e-15);
}

TEST(Inversion, RoundTripOracle) {
  Rng rng(23);
  for (int i = 0; i < 100; ++i) {
    const RigidMotion m = random_motion(rng);
    const SimilarityTransform s = random_similarity(rng);
    const Vec3 x = 4.0 * random_unit(rng);
    EXPECT_NEAR((invert_motion(m).apply(m.apply(x)) - x).norm(), 0.0, 1e-10);
    EXPECT_NEAR((invert_similarity(s).apply(s.apply(x)) - x).norm(), 0.0, 1e-10);
  }
}

// Independent oracle via the relative quaternion.
double quaternion_angle_oracle(const Rotation3& a, const Rotation3& b) {
  const Eigen::Quaterniond qa(a.matrix());
  const Eigen::Quaterniond qb(b.matrix());
  const Eigen::Quaterniond rel = qa.conjugate() * qb;
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

TEST(GeodesicDistance, KnownValues) {
  EXPECT_NEAR(rotation_geodesic_distance(Rotation3{}, Rotation3{}), 0.0, 1e-15);
  const Rotation3 quarter = Rotation3::from_axis_angle({0.0, 0.0, M_PI / 2.0});
  EXPECT_NEAR(rotation_geodesic_distance(quarter, Rotation3{}), M_PI / 2.0, 1e-12);
}

TEST(GeodesicDistance, MatchesQuaternionOracle) {
  Rng rng(24);
  for (int i = 0; i < 300; ++i) {
    const Rotation3 a = random_rotation(rng);
    const Rotation3 b = random_rotation(rng);
    EXPECT_NEAR(rotation_geodesic_distance(a, b), quaternion_angle_oracle(a, b), 1e-9);
  }
}

TEST(Rotation3, InvariantsPreservedByOperations) {
  Rng rng(25);
  const auto expect_rotation = [](const Rotation3& r) {
    EXPECT_TRUE(Rotation3::is_rotation(r.matrix(), 1e-9));
  };
  for (int i = 0; i < 100; ++i) {
    const RigidMotion m1 = random_motion(rng);
    const RigidMotion m2 = random_motion(rng);
    const SimilarityTransform s1 = random_similarity(rng);
    const SimilarityTransform s2 = random_similarity(rng);
    expect_rotation(compose_motion(m1, m2).rotation);
    expect_rotation(compose_similarity(s1, s2).rotation);
    expect_rotation(invert_motion(m1).rotation);
    expect_rotation(invert_similarity(s1).rotation);
    expect_rotation(motion_in_frame(m1, s1).rotation);
    expect_rotation(chain_motion(m1, m2).rotation);
  }
}

TEST(Rotation3, FromMatrixValidates) {
  Mat3 not_a_rotation = Mat3::Identity();
  not_a_rotation(0, 0) = 1.5;
  EXPECT_THROW(Rotation3::from_matrix(not_a_rotation), std::invalid_argument);
  Mat3 reflection = Mat3::Identity();
  reflection(2, 2) = -1.0;
  EXPECT_THROW(Rotation3::from_matrix(reflection), std::invalid_argument);
}

TEST(TransformPose, ProjectionInvariance) {
  // Transporting a camera along the coordinate change leaves projections of
  // correspondingly mapped points untouched.
  Rng rng(26);
  for (int i = 0; i < 100; ++i) {
    const CameraPose pose = random_inward_pose(rng);
    const SimilarityTransform s = random_similarity(rng);
    const Vec3 point = 1.5 * random_unit(rng);
    const CameraPose moved = transform_pose(pose, s);
    const Vec2 original = project(pose, point);
    const Vec2 transported = project(moved, s.apply(point));
    EXPECT_NEAR((original - transported).norm(), 0.0, 1e-8);
  }
}

TEST(MotionInFrame, MatchesConjugation) {
  Rng rng(27);
  for (int i = 0; i < 100; ++i) {
    const RigidMotion m = random_motion(rng);
    const SimilarityTransform s = random_similarity(rng);
    const RigidMotion conjugated = motion_in_frame(m, s);
    const Vec3 x = 3.0 * random_unit(rng);
    const Vec3 direct = s.apply(m.apply(invert_similarity(s).apply(x)));
    EXPECT_NEAR((conjugated.apply(x) - direct).norm(), 0.0, 1e-10);
  }
}

}  // namespace
}  // namespace tbsfm
