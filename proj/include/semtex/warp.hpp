#pragma once

#include <concepts>
#include <cstdint>

#include <Eigen/Core>
#include <Eigen/LU>

#include "semtex/error.hpp"
#include "semtex/so3.hpp"

namespace semtex {

/// Pinhole intrinsics in pixels.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  /// fx = fy = width, principal point at the image center.
  static Intrinsics default_for(std::uint32_t width, std::uint32_t height) {
    return {static_cast<double>(width), static_cast<double>(width), (width - 1.0) / 2.0,
            (height - 1.0) / 2.0};
  }

  Intrinsics scaled_to(std::uint32_t level_scale) const {
    const double s = static_cast<double>(level_scale);
    return {fx / s, fy / s, cx / s, cy / s};
  }

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  Mat3 inverse() const {
    Mat3 k;
    k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
    return k;
  }

  bool operator==(const Intrinsics&) const = default;
};

inline constexpr double kMinDepth = 1e-9;

/// Image-plane translation x -> x + t (2 DoF). t is stored in the pixel units
/// of whatever level the warp currently lives at.
struct TranslationWarp {
  static constexpr int kDof = 2;
  using Params = Eigen::Matrix<double, kDof, 1>;
  using Jacobian = Eigen::Matrix<double, 2, kDof>;

  Vec2 t = Vec2::Zero();

  Vec2 point(double x, double y) const { return {x + t.x(), y + t.y()}; }

  Jacobian jacobian_at_zero(double, double) const { return Jacobian::Identity(); }

  /// W(x;p) <- W(x;p) o W(x;dp)^-1
  TranslationWarp compose_with_inverse_update(const Params& dp) const { return {t - dp}; }

  /// W(x;p) o W(x;offset)
  TranslationWarp with_offset(const Params& offset) const { return {t + offset}; }

  TranslationWarp identity_like() const { return {}; }

  TranslationWarp at_level(std::uint32_t scale) const { return {t / static_cast<double>(scale)}; }
  TranslationWarp to_base(std::uint32_t scale) const { return {t * static_cast<double>(scale)}; }

  /// Projective form of the pixel mapping.
  Mat3 homography() const {
    Mat3 h = Mat3::Identity();
    h(0, 2) = t.x();
    h(1, 2) = t.y();
    return h;
  }
};

/// Pure-rotation homography W(x;w) = pi(K R exp(w^) K^-1 x) about the camera
/// centre. R is the current estimate; parameters are axis-angle increments.
struct RotationWarp {
  static constexpr int kDof = 3;
  using Params = Eigen::Matrix<double, kDof, 1>;
  using Jacobian = Eigen::Matrix<double, 2, kDof>;

  Mat3 R = Mat3::Identity();
  Intrinsics K;

  Mat3 homography() const { return K.matrix() * R * K.inverse(); }

  Vec2 point(double x, double y) const {
    const Vec3 q = homography() * Vec3(x, y, 1.0);
    if (q.z() <= kMinDepth) throw Error(ErrorCode::kBehindCamera, "warped ray points behind the camera");
    return {q.x() / q.z(), q.y() / q.z()};
  }

  /// d/dw pi(K R exp(w^) y) at w = 0 with y = K^-1 x; d/dw exp(w^) y = -y^.
  Jacobian jacobian_at_zero(double x, double y) const {
    const Vec3 ray = K.inverse() * Vec3(x, y, 1.0);
    const Mat3 kr = K.matrix() * R;
    const Vec3 q = kr * ray;
    if (q.z() <= kMinDepth) throw Error(ErrorCode::kBehindCamera, "warped ray points behind the camera");
    Eigen::Matrix<double, 2, 3> dpi;
    const double iz = 1.0 / q.z();
    dpi << iz, 0.0, -q.x() * iz * iz, 0.0, iz, -q.y() * iz * iz;
    return dpi * kr * (-hat(ray));
  }

  RotationWarp compose_with_inverse_update(const Params& dw) const {
    return {orthonormalize(R * so3_exp(-dw)), K};
  }

  RotationWarp with_offset(const Params& offset) const { return {orthonormalize(R * so3_exp(offset)), K}; }

  RotationWarp identity_like() const { return {Mat3::Identity(), K}; }

  RotationWarp at_level(std::uint32_t scale) const { return {R, K.scaled_to(scale)}; }
  RotationWarp to_base(std::uint32_t scale) const {
    const double s = static_cast<double>(scale);
    return {R, {K.fx * s, K.fy * s, K.cx * s, K.cy * s}};
  }
};

template <class W>
concept WarpModel = requires(const W& w, const typename W::Params& p, std::uint32_t s, double x) {
  { W::kDof } -> std::convertible_to<int>;
  { w.point(x, x) } -> std::convertible_to<Vec2>;
  { w.jacobian_at_zero(x, x) } -> std::convertible_to<typename W::Jacobian>;
  { w.compose_with_inverse_update(p) } -> std::same_as<W>;
  { w.with_offset(p) } -> std::same_as<W>;
  { w.identity_like() } -> std::same_as<W>;
  { w.at_level(s) } -> std::same_as<W>;
  { w.to_base(s) } -> std::same_as<W>;
  { w.homography() } -> std::convertible_to<Mat3>;
};

static_assert(WarpModel<TranslationWarp>);
static_assert(WarpModel<RotationWarp>);

}  // namespace semtex
