#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semtex/pyramid.hpp"
#include "semtex/solver.hpp"
#include "semtex/warp.hpp"

namespace semtex {

inline constexpr double kSuccessThreshold = 0.07;

struct BasinAxis {
  int parameter = 1;
  double min = -0.5;
  double max = 0.5;
  double step = 0.04;

  std::size_t count() const { return GridAxis{parameter, min, max, step}.count(); }
  double value(std::size_t i) const { return min + static_cast<double>(i) * step; }
};

/// Regular grid of rotation offsets around ground truth. Defaults: pan (y)
/// by tilt (x), +-0.5 rad in 26 steps, roll fixed at zero.
struct BasinConfig {
  BasinAxis axis0{1, -0.5, 0.5, 0.04};
  BasinAxis axis1{0, -0.5, 0.5, 0.04};
  double success_threshold = kSuccessThreshold;
  std::uint32_t max_iterations = kBasinIterationBudget;
  Vec3 fixed = Vec3::Zero();
  double convergence_epsilon = kDefaultEpsilon;
  double damping_lambda = kDefaultDamping;
  double min_valid_fraction = kDefaultMinValidFraction;

  void validate() const {
    for (const auto* a : {&axis0, &axis1}) {
      if (!(a->step > 0.0) || !(a->min < a->max)) throw Error(ErrorCode::kInvalidArgument, "basin axis needs step > 0 and min < max");
      if (a->parameter < 0 || a->parameter > 2) throw Error(ErrorCode::kInvalidArgument, "basin axis must be 0, 1 or 2");
    }
    if (axis0.parameter == axis1.parameter) throw Error(ErrorCode::kInvalidArgument, "basin axes must differ");
    if (!(success_threshold > 0.0)) throw Error(ErrorCode::kInvalidArgument, "success threshold must be positive");
    if (max_iterations < 1) throw Error(ErrorCode::kInvalidArgument, "iteration budget must be positive");
  }

  double cell_area() const { return axis0.step * axis1.step; }
};

struct BasinCell {
  double offset0 = 0.0;
  double offset1 = 0.0;
  bool converged = false;
  double final_error = 0.0;
  std::uint32_t iterations = 0;
  /// Termination reason, or the error code when the solver threw.
  std::string reason;

  bool operator==(const BasinCell&) const = default;
};

struct BasinResult {
  BasinConfig config;
  std::vector<std::size_t> levels;
  /// Row-major, axis 0 fastest.
  std::vector<BasinCell> cells;
  double basin_area = 0.0;

  std::size_t converged_count() const {
    std::size_t n = 0;
    for (const auto& c : cells) n += c.converged ? 1 : 0;
    return n;
  }
};

/// Initial warp of one cell: ground truth composed with the cell's offset.
inline RotationWarp cell_initialization(const RotationWarp& truth, const BasinConfig& config, double offset0,
                                        double offset1) {
  Vec3 offset = config.fixed;
  offset(config.axis0.parameter) = offset0;
  offset(config.axis1.parameter) = offset1;
  return truth.with_offset(offset);
}

/// Runs one alignment from a cell and classifies it. Solver errors become
/// non-converged cells with the error code as reason.
inline BasinCell evaluate_cell(const FeaturePyramid& template_pyr, const FeaturePyramid& reference_pyr,
                               const RotationWarp& truth, const BasinConfig& config, const Schedule& schedule,
                               double offset0, double offset1, const FeatureMask* mask = nullptr) {
  BasinCell cell{offset0, offset1, false, 0.0, 0, ""};
  const RotationWarp init = cell_initialization(truth, config, offset0, offset1);
  try {
    const auto result = align(template_pyr, reference_pyr, init, schedule, mask);
    cell.final_error = angular_distance(result.warp.R, truth.R);
    cell.iterations = result.total_iterations();
    cell.reason = to_string(result.termination);
    cell.converged = cell.final_error <= config.success_threshold;
  } catch (const Error& e) {
    cell.final_error = angular_distance(init.R, truth.R);
    cell.reason = std::string(to_string(e.code()));
  }
  return cell;
}

/// Schedule used by a sweep: the given levels with the iteration budget split
/// evenly across them.
inline Schedule basin_schedule(std::vector<std::size_t> levels, const BasinConfig& config) {
  Schedule s;
  s.config.iterations_per_level = split_budget(config.max_iterations, levels.size());
  s.config.convergence_epsilon = config.convergence_epsilon;
  s.config.damping_lambda = config.damping_lambda;
  s.config.min_valid_fraction = config.min_valid_fraction;
  s.levels = std::move(levels);
  return s;
}

/// Every grid cell is an independent alignment; results are assembled by
/// cell index, so evaluation order and thread count do not matter.
inline BasinResult sweep(const FeaturePyramid& template_pyr, const FeaturePyramid& reference_pyr,
                         const RotationWarp& truth, const BasinConfig& config, std::vector<std::size_t> levels,
                         const FeatureMask* mask = nullptr, ThreadPool* pool = nullptr) {
  config.validate();
  const Schedule schedule = basin_schedule(std::move(levels), config);
  schedule.validate(template_pyr);
  BasinResult result;
  result.config = config;
  result.levels = schedule.levels;
  const std::size_t n0 = config.axis0.count();
  const std::size_t n1 = config.axis1.count();
  result.cells.resize(n0 * n1);
  for_each_index(pool, result.cells.size(), [&](std::size_t i) {
    result.cells[i] = evaluate_cell(template_pyr, reference_pyr, truth, config, schedule, config.axis0.value(i % n0),
                                    config.axis1.value(i / n0), mask);
  });
  result.basin_area = static_cast<double>(result.converged_count()) * config.cell_area();
  return result;
}

/// Area obtained by re-thresholding an existing sweep.
inline double basin_area_at(const BasinResult& result, double threshold) {
  std::size_t n = 0;
  for (const auto& c : result.cells) n += c.final_error <= threshold ? 1 : 0;
  return static_cast<double>(n) * result.config.cell_area();
}

struct LevelBasin {
  std::size_t level = 0;
  std::uint32_t band = 0;
  BasinResult result;
};

/// One single-level sweep per pyramid level, tagged with the resolution band
/// so conv levels sharing a resolution line up with the matching RGB level.
inline std::vector<LevelBasin> per_level_sweep(const FeaturePyramid& template_pyr, const FeaturePyramid& reference_pyr,
                                               const RotationWarp& truth, const BasinConfig& config,
                                               const FeatureMask* mask = nullptr, ThreadPool* pool = nullptr) {
  const auto bands = resolution_bands(template_pyr);
  std::vector<LevelBasin> out;
  for (std::size_t l = 0; l < template_pyr.size(); ++l) {
    out.push_back({l, bands[l], sweep(template_pyr, reference_pyr, truth, config, {l}, mask, pool)});
  }
  return out;
}

}  // namespace semtex
