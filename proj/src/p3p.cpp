#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "tbsfm/registration.hpp"

namespace tbsfm {
namespace {

// Roots of a quartic via the companion matrix, polished with Newton steps.
std::vector<double> real_quartic_roots(const std::array<double, 5>& c) {
  // c[4] v^4 + c[3] v^3 + c[2] v^2 + c[1] v + c[0] = 0
  if (std::abs(c[4]) < 1e-14 * std::max({std::abs(c[0]), std::abs(c[1]), std::abs(c[2]),
                                         std::abs(c[3]), 1.0})) {
    return {};
  }
  Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
  companion(0, 3) = -c[0] / c[4];
  companion(1, 3) = -c[1] / c[4];
  companion(2, 3) = -c[2] / c[4];
  companion(3, 3) = -c[3] / c[4];
  companion(1, 0) = companion(2, 1) = companion(3, 2) = 1.0;
  const Eigen::EigenSolver<Eigen::Matrix4d> solver(companion, false);

  const auto eval = [&](double v, double& f, double& df) {
    f = ((c[4] * v + c[3]) * v + c[2]) * v * v + c[1] * v + c[0];
    df = ((4.0 * c[4] * v + 3.0 * c[3]) * v + 2.0 * c[2]) * v + c[1];
  };

  std::vector<double> roots;
  for (int i = 0; i < 4; ++i) {
    const std::complex<double> ev = solver.eigenvalues()[i];
    if (std::abs(ev.imag()) > 1e-8 * (1.0 + std::abs(ev.real()))) {
      continue;
    }
    double v = ev.real();
    for (int iter = 0; iter < 3; ++iter) {
      double f = 0.0, df = 0.0;
      eval(v, f, df);
      if (std::abs(df) < 1e-300) {
        break;
      }
      v -= f / df;
    }
    roots.push_back(v);
  }
  return roots;
}

// p(v) coefficients, ascending degree.
using Poly2 = std::array<double, 3>;

std::array<double, 5> poly_square(const Poly2& p) {
  std::array<double, 5> out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      out[static_cast<size_t>(i + j)] += p[static_cast<size_t>(i)] * p[static_cast<size_t>(j)];
    }
  }
  return out;
}

// Rigid transform mapping world points onto camera-frame points: q = R (p - c).
bool absolute_orientation(const std::array<Vec3, 3>& world,
                          const std::array<Vec3, 3>& camera,
                          Rotation3* rotation,
                          Vec3* center) {
  const Vec3 world_centroid = (world[0] + world[1] + world[2]) / 3.0;
  const Vec3 camera_centroid = (camera[0] + camera[1] + camera[2]) / 3.0;
  Mat3 h = Mat3::Zero();
  for (int i = 0; i < 3; ++i) {
    h += (camera[static_cast<size_t>(i)] - camera_centroid) *
         (world[static_cast<size_t>(i)] - world_centroid).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(1) < 1e-12) {
    return false;
  }
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  *rotation = Rotation3::project_to_rotation(r);
  *center = world_centroid - rotation->matrix().transpose() * camera_centroid;
  return true;
}

}  // namespace

std::vector<CameraPose> p3p_minimal(const std::array<Vec2, 3>& pixels,
                                    const std::array<Vec3, 3>& points,
                                    const Intrinsics& intrinsics) {
  // Collinearity check: smallest triangle height.
  const Vec3 e01 = points[1] - points[0];
  const Vec3 e02 = points[2] - points[0];
  const Vec3 e12 = points[2] - points[1];
  const double area2 = e01.cross(e02).norm();
  const double longest = std::max({e01.norm(), e02.norm(), e12.norm()});
  if (longest < 1e-12 || area2 / longest <= 1e-9) {
    return {};
  }

  // Unit bearing vectors.
  std::array<Vec3, 3> f;
  for (int i = 0; i < 3; ++i) {
    const Vec2& px = pixels[static_cast<size_t>(i)];
    f[static_cast<size_t>(i)] =
        Vec3{(px.x() - intrinsics.cx) / intrinsics.fx, (px.y() - intrinsics.cy) / intrinsics.fy,
             1.0}
            .normalized();
  }
  const double cos_a = f[1].dot(f[2]);  // opposite side a = |P2 P3|
  const double cos_b = f[0].dot(f[2]);  // opposite side b = |P1 P3|
  const double cos_g = f[0].dot(f[1]);  // opposite side c = |P1 P2|

  // Squared side lengths, normalized by b^2 for conditioning.
  const double b2_raw = e02.squaredNorm();
  const double a2 = e12.squaredNorm() / b2_raw;
  const double b2 = 1.0;
  const double c2 = e01.squaredNorm() / b2_raw;
  const double b_len = std::sqrt(b2_raw);

  // With u = s2/s1, v = s3/s1 the law-of-cosines system reduces to
  //   Q2(u, v) = b2 u^2 - 2 b2 cg u + (b2 - c2 - c2 v^2 + 2 c2 cb v) = 0
  // and u = N(v) / D(v) with
  //   N(v) = (b2 - a2 + c2) v^2 + 2 cb (a2 - c2) v + (c2 - a2 - b2)
  //   D(v) = 2 b2 (ca v - cg).
  const Poly2 n{c2 - a2 - b2, 2.0 * cos_b * (a2 - c2), b2 - a2 + c2};
  const double d0 = -2.0 * b2 * cos_g;
  const double d1 = 2.0 * b2 * cos_a;
  const Poly2 q{b2 - c2, 2.0 * c2 * cos_b, -c2};

  // Quartic in v: b2 N^2 - 2 b2 cg N D + Q D^2 = 0.
  std::array<double, 5> quartic = poly_square(n);
  for (auto& coeff : quartic) {
    coeff *= b2;
  }
  // - 2 b2 cg * N(v) * D(v)
  const double k = -2.0 * b2 * cos_g;
  for (int i = 0; i < 3; ++i) {
    quartic[static_cast<size_t>(i)] += k * n[static_cast<size_t>(i)] * d0;
    quartic[static_cast<size_t>(i) + 1] += k * n[static_cast<size_t>(i)] * d1;
  }
  // + Q(v) * D(v)^2
  const std::array<double, 3> dd{d0 * d0, 2.0 * d0 * d1, d1 * d1};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      quartic[static_cast<size_t>(i + j)] += q[static_cast<size_t>(i)] * dd[static_cast<size_t>(j)];
    }
  }

  // Newton polish of the distance triple on the three law-of-cosines
  // equations; recovers full precision lost to quartic conditioning.
  const double a2_raw = e12.squaredNorm();
  const double c2_raw = e01.squaredNorm();
  const auto polish_distances = [&](std::array<double, 3>& s) {
    for (int iter = 0; iter < 5; ++iter) {
      const Vec3 residual{
          s[1] * s[1] + s[2] * s[2] - 2.0 * s[1] * s[2] * cos_a - a2_raw,
          s[0] * s[0] + s[2] * s[2] - 2.0 * s[0] * s[2] * cos_b - b2_raw,
          s[0] * s[0] + s[1] * s[1] - 2.0 * s[0] * s[1] * cos_g - c2_raw};
      Mat3 jacobian;
      jacobian << 0.0, 2.0 * (s[1] - s[2] * cos_a), 2.0 * (s[2] - s[1] * cos_a),
          2.0 * (s[0] - s[2] * cos_b), 0.0, 2.0 * (s[2] - s[0] * cos_b),
          2.0 * (s[0] - s[1] * cos_g), 2.0 * (s[1] - s[0] * cos_g), 0.0;
      const Vec3 step = jacobian.fullPivLu().solve(residual);
      s[0] -= step(0);
      s[1] -= step(1);
      s[2] -= step(2);
      if (step.cwiseAbs().maxCoeff() < 1e-14 * (1.0 + std::abs(s[0]))) {
        break;
      }
    }
  };

  std::vector<CameraPose> solutions;
  for (const double v : real_quartic_roots(quartic)) {
    if (v <= 0.0) {
      continue;
    }
    // Candidates for u = s2/s1: the rational elimination, plus the two roots
    // of the (b, c) quadratic, which stay well conditioned when the rational
    // form degenerates.
    std::vector<double> u_candidates;
    const double denom = d0 + d1 * v;
    if (std::abs(denom) > 1e-9) {
      u_candidates.push_back(((n[2] * v + n[1]) * v + n[0]) / denom);
    }
    {
      // b2 u^2 - 2 b2 cg u + (b2 - c2 - c2 v^2 + 2 c2 cb v) = 0
      const double qa = b2;
      const double qb = -2.0 * b2 * cos_g;
      const double qc = b2 - c2 - c2 * v * v + 2.0 * c2 * cos_b * v;
      const double disc = qb * qb - 4.0 * qa * qc;
      if (disc >= 0.0) {
        const double root = std::sqrt(disc);
        u_candidates.push_back((-qb + root) / (2.0 * qa));
        u_candidates.push_back((-qb - root) / (2.0 * qa));
      }
    }

    for (const double u : u_candidates) {
      if (u <= 0.0) {
        continue;
      }
      const double s1_sq = b2 / (1.0 + v * v - 2.0 * v * cos_b);
      if (!(s1_sq > 0.0)) {
        continue;
      }
      const double s1 = std::sqrt(s1_sq) * b_len;
      std::array<double, 3> distances{s1, u * s1, v * s1};
      polish_distances(distances);
      if (!(distances[0] > 0.0) || !(distances[1] > 0.0) || !(distances[2] > 0.0)) {
        continue;
      }
      const std::array<Vec3, 3> camera_points{distances[0] * f[0], distances[1] * f[1],
                                              distances[2] * f[2]};

      Rotation3 rotation;
      Vec3 center;
      if (!absolute_orientation(points, camera_points, &rotation, &center)) {
        continue;
      }
      CameraPose pose{intrinsics, rotation, center};

      double max_error = 0.0;
      bool valid = true;
      for (int i = 0; i < 3 && valid; ++i) {
        const auto reproj = try_project(pose, points[static_cast<size_t>(i)]);
        if (!reproj.has_value()) {
          valid = false;
          break;
        }
        max_error = std::max(max_error, (*reproj - pixels[static_cast<size_t>(i)]).norm());
      }
      if (!valid || max_error > 1e-6) {
        continue;
      }
      // Drop duplicates from clustered quartic roots.
      bool duplicate = false;
      for (const CameraPose& other : solutions) {
        if ((other.center - pose.center).norm() < 1e-9 * (1.0 + pose.center.norm()) &&
            rotation_geodesic_distance(other.rotation, pose.rotation) < 1e-9) {
          duplicate = true;
          break;
        }
      }
      if (!duplicate) {
        solutions.push_back(std::move(pose));
      }
    }
  }
  return solutions;
}

}  // namespace tbsfm
