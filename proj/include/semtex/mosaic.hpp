#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "semtex/image_ops.hpp"
#include "semtex/parallel.hpp"
#include "semtex/solver.hpp"
#include "semtex/warp.hpp"

namespace semtex {

using Extractor = std::function<FeaturePyramid(const FeatureVolume&)>;

struct TrackerConfig {
  SolverConfig solver;
  /// Lost when the final cost exceeds this multiple of the keyframe noise floor.
  double lost_cost_multiple = 10.0;
  /// Lower bound of the noise floor as a fraction of the keyframe's signal
  /// variance (a noise-free self-alignment has zero cost).
  double noise_floor_fraction = 1e-3;
  double spawn_threshold = 0.35;
};

/// Stored reference frame. Rotations are world-from-camera.
struct Keyframe {
  std::size_t id = 0;
  Mat3 R_wk = Mat3::Identity();
  FeaturePyramid pyramid;
  FeatureVolume image;
  /// Intrinsics of the pyramid's base resolution (tracking).
  Intrinsics K_track;
  /// Intrinsics of the stored image (rendering).
  Intrinsics K_image;
  PrecomputeSet<RotationWarp> precompute;
  double noise_floor = 0.0;
};

enum class TrackStatus { kTracking, kLost };

inline std::string to_string(TrackStatus s) { return s == TrackStatus::kTracking ? "tracking" : "lost"; }

struct FrameReport {
  std::size_t frame = 0;
  Mat3 R_wc = Mat3::Identity();
  std::size_t reference_keyframe = 0;
  TrackStatus status = TrackStatus::kTracking;
  double cost = 0.0;
  std::string termination;
  bool spawned = false;
};

/// Rotation-only tracker over a keyframe map. Single owner, one frame at a time.
class Tracker {
 public:
  Tracker(Extractor extractor, TrackerConfig config, ThreadPool* pool = nullptr)
      : extractor_(std::move(extractor)), config_(std::move(config)), pool_(pool) {}

  const std::vector<Keyframe>& keyframes() const noexcept { return keyframes_; }
  const Mat3& rotation() const noexcept { return R_wc_; }
  TrackStatus status() const noexcept { return status_; }
  std::size_t reference_keyframe() const noexcept { return reference_; }

  void reset() {
    keyframes_.clear();
    R_wc_ = Mat3::Identity();
    status_ = TrackStatus::kTracking;
    reference_ = 0;
    frames_ = 0;
  }

  /// Tracks a frame and spawns a keyframe when the pose has moved far enough.
  FrameReport process(const FeatureVolume& frame) {
    FeaturePyramid pyr = extractor_(frame);
    FrameReport report = track(frame, pyr);
    if (report.status == TrackStatus::kTracking) report.spawned = maybe_spawn_keyframe(frame, pyr);
    return report;
  }

  FrameReport track_frame(const FeatureVolume& frame) {
    FeaturePyramid pyr = extractor_(frame);
    return track(frame, pyr);
  }

  /// Adds a keyframe at the current pose if every keyframe is further than
  /// the spawn threshold. Returns whether one was added.
  bool maybe_spawn_keyframe(const FeatureVolume& frame, const FeaturePyramid& pyr) {
    if (status_ != TrackStatus::kTracking) return false;
    if (!keyframes_.empty() && angular_distance(R_wc_, keyframes_[nearest_keyframe(R_wc_)].R_wk) <= config_.spawn_threshold) {
      return false;
    }
    add_keyframe(frame, pyr, R_wc_);
    reference_ = nearest_keyframe(R_wc_);
    return true;
  }

  std::size_t nearest_keyframe(const Mat3& R) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < keyframes_.size(); ++i) {
      const double d = angular_distance(R, keyframes_[i].R_wk);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }

 private:
  Schedule schedule_for(const FeaturePyramid& pyr) const { return full_schedule(pyr, config_.solver); }

  void add_keyframe(const FeatureVolume& frame, const FeaturePyramid& pyr, const Mat3& R) {
    Keyframe kf;
    kf.id = keyframes_.size();
    kf.R_wk = R;
    kf.pyramid = pyr;
    kf.image = frame;
    kf.K_track = Intrinsics::default_for(pyr.base_width ? pyr.base_width : pyr.levels[0].width(),
                                         pyr.base_height ? pyr.base_height : pyr.levels[0].height());
    kf.K_image = Intrinsics::default_for(frame.width(), frame.height());
    const RotationWarp identity{Mat3::Identity(), kf.K_track};
    const Schedule schedule = schedule_for(pyr);
    kf.precompute = precompute_pyramid(pyr, identity, schedule.levels, nullptr, pool_);
    const auto self = align(pyr, pyr, identity, schedule, nullptr, pool_, &kf.precompute);
    const auto& finest = pyr.levels[schedule.levels.back()];
    double variance = 0.0;
    for (std::uint32_t c = 0; c < finest.channels(); ++c) {
      double mean = 0.0;
      double sq = 0.0;
      for (float v : finest.channel(c)) {
        mean += v;
        sq += static_cast<double>(v) * v;
      }
      const double n = static_cast<double>(finest.plane_size());
      mean /= n;
      variance += sq / n - mean * mean;
    }
    kf.noise_floor = std::max(self.final_cost(), config_.noise_floor_fraction * variance);
    keyframes_.push_back(std::move(kf));
  }

  FrameReport track(const FeatureVolume& frame, const FeaturePyramid& pyr) {
    FrameReport report;
    report.frame = frames_++;
    if (keyframes_.empty()) {
      add_keyframe(frame, pyr, Mat3::Identity());
      R_wc_ = Mat3::Identity();
      reference_ = 0;
      status_ = TrackStatus::kTracking;
      report.R_wc = R_wc_;
      report.termination = "bootstrap";
      return report;
    }
    report.R_wc = R_wc_;
    report.reference_keyframe = reference_;
    if (status_ == TrackStatus::kLost) {
      report.status = status_;
      report.termination = "lost";
      return report;
    }
    const Keyframe& kf = keyframes_[reference_];
    // The warp maps keyframe pixels into the current frame: R_cw * R_wk.
    const RotationWarp init{R_wc_.transpose() * kf.R_wk, kf.K_track};
    try {
      const auto result = align(kf.pyramid, pyr, init, schedule_for(pyr), nullptr, pool_, &kf.precompute);
      report.cost = result.final_cost();
      report.termination = to_string(result.termination);
      const bool degenerate = result.termination == Termination::kDegenerate;
      if (degenerate || report.cost > config_.lost_cost_multiple * kf.noise_floor) {
        status_ = TrackStatus::kLost;
      } else {
        R_wc_ = orthonormalize(kf.R_wk * result.warp.R.transpose());
        reference_ = nearest_keyframe(R_wc_);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInsufficientOverlap) throw;
      report.termination = std::string(to_string(e.code()));
      status_ = TrackStatus::kLost;
    }
    report.status = status_;
    report.R_wc = R_wc_;
    report.reference_keyframe = reference_;
    return report;
  }

  Extractor extractor_;
  TrackerConfig config_;
  ThreadPool* pool_ = nullptr;
  std::vector<Keyframe> keyframes_;
  Mat3 R_wc_ = Mat3::Identity();
  TrackStatus status_ = TrackStatus::kTracking;
  std::size_t reference_ = 0;
  std::size_t frames_ = 0;
};

struct Panorama {
  FeatureVolume image;
  /// Keyframe index that produced each pixel, -1 where nothing was observed.
  std::vector<std::int32_t> source;
};

/// Unit ray (camera convention: x right, y down, z forward) of an
/// equirectangular pixel centre.
inline Vec3 panorama_ray(std::uint32_t u, std::uint32_t v, std::uint32_t width, std::uint32_t height) {
  const double lon = (u + 0.5) / width * 2.0 * M_PI - M_PI;
  const double lat = M_PI / 2.0 - (v + 0.5) / height * M_PI;
  return {std::cos(lat) * std::sin(lon), -std::sin(lat), std::cos(lat) * std::cos(lon)};
}

/// Equirectangular rendering of the keyframe images, out_width x out_width/2.
/// Each ray is drawn from the keyframe whose optical axis is nearest.
inline Panorama render_panorama(const std::vector<Keyframe>& keyframes, std::uint32_t out_width,
                                ThreadPool* pool = nullptr) {
  if (keyframes.empty()) throw Error(ErrorCode::kInvalidArgument, "panorama needs at least one keyframe");
  if (out_width < 2) throw Error(ErrorCode::kInvalidArgument, "panorama width must be at least 2");
  const std::uint32_t out_height = out_width / 2;
  const std::uint32_t channels = keyframes.front().image.channels();
  Panorama pano{FeatureVolume(out_width, out_height, channels), std::vector<std::int32_t>(std::size_t{out_width} * out_height, -1)};
  std::vector<Vec3> axes;
  for (const auto& kf : keyframes) {
    if (kf.image.channels() != channels) throw Error(ErrorCode::kChannelMismatch, "keyframe images differ in channels");
    axes.push_back(kf.R_wk.col(2));
  }
  for_each_index(pool, out_height, [&](std::size_t row) {
    const auto v = static_cast<std::uint32_t>(row);
    for (std::uint32_t u = 0; u < out_width; ++u) {
      const Vec3 ray = panorama_ray(u, v, out_width, out_height);
      std::size_t best = 0;
      for (std::size_t k = 1; k < axes.size(); ++k) {
        if (axes[k].dot(ray) > axes[best].dot(ray)) best = k;
      }
      const auto& kf = keyframes[best];
      const Vec3 c = kf.R_wk.transpose() * ray;
      if (c.z() <= kMinDepth) continue;
      const Vec3 px = kf.K_image.matrix() * (c / c.z());
      if (!(px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= kf.image.width() - 1.0 && px.y() <= kf.image.height() - 1.0)) {
        continue;
      }
      for (std::uint32_t ch = 0; ch < channels; ++ch) {
        pano.image.at(ch, v, u) = static_cast<float>(
            sample_plane(kf.image.channel(ch), kf.image.width(), kf.image.height(), px.x(), px.y()));
      }
      pano.source[std::size_t{v} * out_width + u] = static_cast<std::int32_t>(best);
    }
  });
  return pano;
}

}  // namespace semtex
