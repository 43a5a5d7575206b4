#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Core>
#include <Eigen/SVD>

namespace semtex {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

inline Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

/// Exponential map so(3) -> SO(3), Rodrigues form. Tiny angles fall back to
/// the second-order series.
inline Mat3 so3_exp(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const Mat3 w = hat(omega);
  if (theta2 < 1e-16) return Mat3::Identity() + w + 0.5 * w * w;
  const double theta = std::sqrt(theta2);
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * w + b * w * w;
}

/// Principal-branch logarithm, returned as an axis-angle vector.
inline Vec3 so3_log(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(c);
  const Vec3 v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < 1e-6) return 0.5 * v;
  if (M_PI - theta < 1e-4) {
    // Near pi the antisymmetric part vanishes; recover the axis from R + I.
    const Mat3 s = 0.5 * (r + Mat3::Identity());
    int k = 0;
    s.diagonal().maxCoeff(&k);
    Vec3 axis = s.col(k) / std::sqrt(std::max(s(k, k), 1e-300));
    if (axis.dot(v) < 0.0) axis = -axis;
    return theta * axis.normalized();
  }
  return theta / (2.0 * std::sin(theta)) * v;
}

/// Nearest rotation in the Frobenius sense (polar decomposition).
inline Mat3 orthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

/// Geodesic distance |log(R1^T R2)| in radians, in [0, pi].
inline double angular_distance(const Mat3& r1, const Mat3& r2) {
  const Mat3 d = r1.transpose() * r2;
  const double c = std::clamp((d.trace() - 1.0) / 2.0, -1.0, 1.0);
  // acos loses precision near 0; use the sine of the antisymmetric part there.
  if (c > 0.9) {
    const Vec3 v(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1));
    return std::atan2(0.5 * v.norm(), c);
  }
  return std::acos(c);
}

}  // namespace semtex
