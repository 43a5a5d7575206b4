#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "semtex/image_ops.hpp"
#include "semtex/parallel.hpp"
#include "semtex/tensor.hpp"
#include "semtex/warp.hpp"

namespace semtex {

inline constexpr std::uint32_t kDefaultItersPerLevel = 50;
inline constexpr std::uint32_t kBasinIterationBudget = 1000;
inline constexpr double kDefaultEpsilon = 1e-7;
inline constexpr double kDefaultDamping = 1e-8;
inline constexpr double kDefaultMinValidFraction = 0.25;
inline constexpr double kDegenerateRatio = 1e-12;

/// Rows per reduction tile. Fixed so partial sums never depend on threads.
inline constexpr std::uint32_t kTileRows = 16;

struct SolverConfig {
  /// One cap per scheduled level, coarse to fine. Empty means the default
  /// cap for every scheduled level.
  std::vector<std::uint32_t> iterations_per_level;
  double convergence_epsilon = kDefaultEpsilon;
  /// Relative Tikhonov factor; the added diagonal is damping * trace(H) / dof.
  double damping_lambda = kDefaultDamping;
  double min_valid_fraction = kDefaultMinValidFraction;
};

/// Levels to visit (indices into the pyramid, coarse to fine) plus solver knobs.
struct Schedule {
  std::vector<std::size_t> levels;
  SolverConfig config;

  std::uint32_t cap_for(std::size_t position) const {
    if (config.iterations_per_level.empty()) return kDefaultItersPerLevel;
    return config.iterations_per_level.at(position);
  }

  void validate(const FeaturePyramid& pyr) const {
    if (levels.empty()) throw Error(ErrorCode::kInvalidArgument, "schedule has no levels");
    if (!config.iterations_per_level.empty() && config.iterations_per_level.size() != levels.size()) {
      throw Error(ErrorCode::kInvalidArgument, "iterations_per_level must have one entry per scheduled level");
    }
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (levels[i] >= pyr.size()) throw Error(ErrorCode::kInvalidArgument, "schedule references a missing level");
      if (i > 0 && pyr.level_scale[levels[i]] > pyr.level_scale[levels[i - 1]]) {
        throw Error(ErrorCode::kInvalidArgument, "schedule must run coarse to fine");
      }
    }
    for (auto cap : config.iterations_per_level) {
      if (cap < 1) throw Error(ErrorCode::kInvalidArgument, "iteration caps must be >= 1");
    }
    if (!(config.min_valid_fraction > 0.0 && config.min_valid_fraction <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "min_valid_fraction must lie in (0,1]");
    }
  }
};

/// Every level, coarsest first.
inline Schedule full_schedule(const FeaturePyramid& pyr, SolverConfig config = {}) {
  Schedule s;
  for (std::size_t l = pyr.size(); l-- > 0;) s.levels.push_back(l);
  s.config = std::move(config);
  return s;
}

/// Splits a total iteration budget evenly over the scheduled levels.
inline std::vector<std::uint32_t> split_budget(std::uint32_t total, std::size_t levels) {
  std::vector<std::uint32_t> caps(levels, static_cast<std::uint32_t>(total / levels));
  for (std::size_t i = 0; i < total % levels; ++i) ++caps[caps.size() - 1 - i];
  for (auto& c : caps) c = std::max(c, 1u);
  return caps;
}

/// Selected channel indices per pyramid level.
struct FeatureMask {
  std::vector<std::vector<std::uint32_t>> levels;

  static FeatureMask all(const FeaturePyramid& pyr) {
    FeatureMask m;
    for (const auto& v : pyr.levels) {
      std::vector<std::uint32_t> idx(v.channels());
      std::iota(idx.begin(), idx.end(), 0u);
      m.levels.push_back(std::move(idx));
    }
    return m;
  }

  void validate(const FeaturePyramid& pyr) const {
    if (levels.size() != pyr.size()) throw Error(ErrorCode::kInvalidArgument, "mask level count differs from pyramid");
    for (std::size_t l = 0; l < levels.size(); ++l) {
      auto sorted = levels[l];
      std::sort(sorted.begin(), sorted.end());
      if (sorted.empty()) throw Error(ErrorCode::kInvalidArgument, "mask keeps no channel at a level");
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw Error(ErrorCode::kInvalidArgument, "mask has duplicate channels");
      }
      if (sorted.back() >= pyr.levels[l].channels()) throw Error(ErrorCode::kInvalidArgument, "mask channel out of range");
    }
  }

  bool operator==(const FeatureMask&) const = default;
};

template <int Dof>
struct NormalEquations {
  Eigen::Matrix<double, Dof, Dof> H = Eigen::Matrix<double, Dof, Dof>::Zero();
  Eigen::Matrix<double, Dof, 1> b = Eigen::Matrix<double, Dof, 1>::Zero();
  std::size_t valid_pixels = 0;
  std::size_t total_pixels = 0;
  /// Sum of squared residuals over valid pixels and channels.
  double cost = 0.0;

  double mean_cost() const { return valid_pixels ? cost / static_cast<double>(valid_pixels) : 0.0; }
};

/// Template-side data for one level: steepest-descent rows J = -grad(I_t) dW/dp
/// stored [channel][pixel][dof], and the full-image Hessian sum of J^T J.
template <WarpModel W>
struct LevelPrecompute {
  static constexpr int kDof = W::kDof;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint32_t> channels;
  std::vector<float> template_values;
  std::vector<float> steepest_descent;
  FeatureVolume grad_x;
  FeatureVolume grad_y;
  Eigen::Matrix<double, kDof, kDof> H = Eigen::Matrix<double, kDof, kDof>::Zero();
  bool degenerate = false;

  std::size_t pixels() const { return std::size_t{width} * height; }

  const float* row(std::size_t channel_slot, std::size_t pixel) const {
    return steepest_descent.data() + (channel_slot * pixels() + pixel) * kDof;
  }
};

namespace detail {

inline std::uint32_t tile_count(std::uint32_t height) { return (height + kTileRows - 1) / kTileRows; }

/// Bilinear footprints of every template pixel under the projective map h.
inline std::vector<BilinearTap> warp_taps(const Mat3& h, std::uint32_t width, std::uint32_t height,
                                          std::uint32_t ref_width, std::uint32_t ref_height, ThreadPool* pool) {
  std::vector<BilinearTap> taps(std::size_t{width} * height);
  for_each_index(pool, tile_count(height), [&](std::size_t tile) {
    const std::uint32_t y0 = static_cast<std::uint32_t>(tile) * kTileRows;
    const std::uint32_t y1 = std::min(height, y0 + kTileRows);
    for (std::uint32_t y = y0; y < y1; ++y) {
      for (std::uint32_t x = 0; x < width; ++x) {
        const double qx = h(0, 0) * x + h(0, 1) * y + h(0, 2);
        const double qy = h(1, 0) * x + h(1, 1) * y + h(1, 2);
        const double qz = h(2, 0) * x + h(2, 1) * y + h(2, 2);
        auto& tap = taps[std::size_t{y} * width + x];
        if (qz > kMinDepth) tap = bilinear_tap(ref_width, ref_height, qx / qz, qy / qz);
      }
    }
  });
  return taps;
}

inline float sample_tap(const float* plane, std::uint32_t width, std::uint32_t height, const BilinearTap& tap) {
  const std::size_t dx = width > 1 ? 1 : 0;
  const std::size_t dy = height > 1 ? width : 0;
  const float* p = plane + tap.offset;
  const float top = (1.0f - tap.ax) * p[0] + tap.ax * p[dx];
  const float bottom = (1.0f - tap.ax) * p[dy] + tap.ax * p[dy + dx];
  return (1.0f - tap.ay) * top + tap.ay * bottom;
}

inline std::size_t count_valid(const std::vector<BilinearTap>& taps) {
  return static_cast<std::size_t>(std::count_if(taps.begin(), taps.end(), [](const auto& t) { return t.valid; }));
}

/// Sum over valid pixels of squared residuals, reduced per (channel, tile)
/// in fixed order.
inline double residual_cost(const FeatureVolume& tmpl, const FeatureVolume& ref, std::span<const std::uint32_t> channels,
                            const std::vector<BilinearTap>& taps, ThreadPool* pool) {
  const std::uint32_t w = tmpl.width();
  const std::uint32_t tiles = tile_count(tmpl.height());
  std::vector<double> partial(channels.size() * tiles, 0.0);
  for_each_index(pool, partial.size(), [&](std::size_t item) {
    const std::size_t slot = item / tiles;
    const std::uint32_t y0 = static_cast<std::uint32_t>(item % tiles) * kTileRows;
    const std::uint32_t y1 = std::min(tmpl.height(), y0 + kTileRows);
    const float* t = tmpl.channel(channels[slot]).data();
    const float* r = ref.channel(channels[slot]).data();
    double acc = 0.0;
    for (std::size_t i = std::size_t{y0} * w; i < std::size_t{y1} * w; ++i) {
      if (!taps[i].valid) continue;
      const double e = static_cast<double>(t[i]) - sample_tap(r, ref.width(), ref.height(), taps[i]);
      acc += e * e;
    }
    partial[item] = acc;
  });
  double cost = 0.0;
  for (std::size_t slot = 0; slot < channels.size(); ++slot) {
    double channel_cost = 0.0;
    for (std::uint32_t tile = 0; tile < tiles; ++tile) channel_cost += partial[slot * tiles + tile];
    cost += channel_cost;
  }
  return cost;
}

template <int Dof>
bool hessian_degenerate(const Eigen::Matrix<double, Dof, Dof>& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, Dof, Dof>> eig(h, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  const double largest = ev.maxCoeff();
  return !(largest > 0.0) || ev.minCoeff() < kDegenerateRatio * largest;
}

}  // namespace detail

/// Steepest-descent rows and Hessian of a template level. level_warp supplies
/// the level intrinsics; the Jacobian is taken at the identity warp.
template <WarpModel W>
LevelPrecompute<W> precompute_level(const FeatureVolume& tmpl, const W& level_warp,
                                    std::span<const std::uint32_t> channels, ThreadPool* pool = nullptr) {
  constexpr int D = W::kDof;
  LevelPrecompute<W> pre;
  pre.width = tmpl.width();
  pre.height = tmpl.height();
  pre.channels.assign(channels.begin(), channels.end());
  for (auto c : pre.channels) {
    if (c >= tmpl.channels()) throw Error(ErrorCode::kChannelMismatch, "precompute channel out of range");
  }
  auto [gx, gy] = gradient_central(tmpl);
  const W identity = level_warp.identity_like();
  const std::size_t n = pre.pixels();
  std::vector<typename W::Jacobian> dw(n);
  for (std::uint32_t y = 0; y < pre.height; ++y) {
    for (std::uint32_t x = 0; x < pre.width; ++x) dw[std::size_t{y} * pre.width + x] = identity.jacobian_at_zero(x, y);
  }
  pre.template_values.resize(pre.channels.size() * n);
  pre.steepest_descent.resize(pre.channels.size() * n * D);
  const std::uint32_t tiles = detail::tile_count(pre.height);
  std::vector<Eigen::Matrix<double, D, D>> partial(pre.channels.size() * tiles);
  for_each_index(pool, partial.size(), [&](std::size_t item) {
    const std::size_t slot = item / tiles;
    const std::uint32_t c = pre.channels[slot];
    const std::uint32_t y0 = static_cast<std::uint32_t>(item % tiles) * kTileRows;
    const std::uint32_t y1 = std::min(pre.height, y0 + kTileRows);
    auto tv = tmpl.channel(c);
    auto gxc = gx.channel(c);
    auto gyc = gy.channel(c);
    Eigen::Matrix<double, D, D> h = Eigen::Matrix<double, D, D>::Zero();
    for (std::size_t i = std::size_t{y0} * pre.width; i < std::size_t{y1} * pre.width; ++i) {
      pre.template_values[slot * n + i] = tv[i];
      const Eigen::Matrix<double, 1, 2> grad(gxc[i], gyc[i]);
      const Eigen::Matrix<double, 1, D> j = -grad * dw[i];
      float* dst = pre.steepest_descent.data() + (slot * n + i) * D;
      Eigen::Matrix<double, 1, D> jf;
      for (int k = 0; k < D; ++k) {
        dst[k] = static_cast<float>(j(k));
        jf(k) = dst[k];
      }
      h.noalias() += jf.transpose() * jf;
    }
    partial[item] = h;
  });
  for (std::size_t slot = 0; slot < pre.channels.size(); ++slot) {
    Eigen::Matrix<double, D, D> hc = Eigen::Matrix<double, D, D>::Zero();
    for (std::uint32_t tile = 0; tile < tiles; ++tile) hc += partial[slot * tiles + tile];
    pre.H += hc;
  }
  pre.grad_x = std::move(gx);
  pre.grad_y = std::move(gy);
  pre.degenerate = detail::hessian_degenerate<D>(pre.H);
  return pre;
}

template <WarpModel W>
LevelPrecompute<W> precompute_level(const FeatureVolume& tmpl, const W& level_warp, ThreadPool* pool = nullptr) {
  std::vector<std::uint32_t> all(tmpl.channels());
  std::iota(all.begin(), all.end(), 0u);
  return precompute_level(tmpl, level_warp, std::span<const std::uint32_t>(all), pool);
}

/// Normal equations at the current warp: residual e = V_t(x) - V_r(W(x;p)),
/// b = sum J^T e and H = sum J^T J, both over valid pixels only, so that
/// dp = H^-1 b followed by W <- W o W(dp)^-1 descends the cost.
template <WarpModel W>
NormalEquations<W::kDof> accumulate_residual(const FeatureVolume& reference, const LevelPrecompute<W>& pre,
                                             const W& level_warp, double min_valid_fraction = kDefaultMinValidFraction,
                                             ThreadPool* pool = nullptr) {
  constexpr int D = W::kDof;
  for (auto c : pre.channels) {
    if (c >= reference.channels()) throw Error(ErrorCode::kChannelMismatch, "reference lacks template channels");
  }
  const auto taps = detail::warp_taps(level_warp.homography(), pre.width, pre.height, reference.width(),
                                      reference.height(), pool);
  NormalEquations<D> ne;
  ne.total_pixels = pre.pixels();
  ne.valid_pixels = detail::count_valid(taps);
  if (static_cast<double>(ne.valid_pixels) < min_valid_fraction * static_cast<double>(ne.total_pixels) ||
      ne.valid_pixels == 0) {
    throw Error(ErrorCode::kInsufficientOverlap, std::to_string(ne.valid_pixels) + " of " +
                                                     std::to_string(ne.total_pixels) + " pixels overlap");
  }
  struct Partial {
    Eigen::Matrix<double, D, D> H;
    Eigen::Matrix<double, D, 1> b;
    double cost;
  };
  const std::uint32_t tiles = detail::tile_count(pre.height);
  const std::size_t n = pre.pixels();
  std::vector<Partial> partial(pre.channels.size() * tiles);
  for_each_index(pool, partial.size(), [&](std::size_t item) {
    const std::size_t slot = item / tiles;
    const std::uint32_t y0 = static_cast<std::uint32_t>(item % tiles) * kTileRows;
    const std::uint32_t y1 = std::min(pre.height, y0 + kTileRows);
    const float* ref = reference.channel(pre.channels[slot]).data();
    const float* tv = pre.template_values.data() + slot * n;
    double h[D][D] = {};
    double b[D] = {};
    double cost = 0.0;
    for (std::size_t i = std::size_t{y0} * pre.width; i < std::size_t{y1} * pre.width; ++i) {
      const auto& tap = taps[i];
      if (!tap.valid) continue;
      const double e = static_cast<double>(tv[i]) - detail::sample_tap(ref, reference.width(), reference.height(), tap);
      const float* j = pre.row(slot, i);
      for (int r = 0; r < D; ++r) {
        b[r] += j[r] * e;
        for (int c = r; c < D; ++c) h[r][c] += static_cast<double>(j[r]) * j[c];
      }
      cost += e * e;
    }
    Partial p;
    for (int r = 0; r < D; ++r) {
      p.b(r) = b[r];
      for (int c = r; c < D; ++c) p.H(r, c) = p.H(c, r) = h[r][c];
    }
    p.cost = cost;
    partial[item] = p;
  });
  for (std::size_t slot = 0; slot < pre.channels.size(); ++slot) {
    Partial sum{Eigen::Matrix<double, D, D>::Zero(), Eigen::Matrix<double, D, 1>::Zero(), 0.0};
    for (std::uint32_t tile = 0; tile < tiles; ++tile) {
      const auto& p = partial[slot * tiles + tile];
      sum.H += p.H;
      sum.b += p.b;
      sum.cost += p.cost;
    }
    ne.H += sum.H;
    ne.b += sum.b;
    ne.cost += sum.cost;
  }
  return ne;
}

/// dp = (H + lambda I)^-1 b with lambda = damping * trace(H) / dof, via LLT.
template <int Dof>
Eigen::Matrix<double, Dof, 1> solve_update(const NormalEquations<Dof>& ne, double damping = kDefaultDamping) {
  if (ne.valid_pixels == 0) throw Error(ErrorCode::kInsufficientOverlap, "no valid pixels");
  if (ne.b.isZero(0.0)) return Eigen::Matrix<double, Dof, 1>::Zero();
  const double lambda = damping * ne.H.trace() / Dof;
  Eigen::Matrix<double, Dof, Dof> a = ne.H;
  a.diagonal().array() += lambda;
  Eigen::LLT<Eigen::Matrix<double, Dof, Dof>> llt(a);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::kSingularSystem, "normal equations are not positive definite");
  Eigen::Matrix<double, Dof, 1> dp = llt.solve(ne.b);
  if (!dp.allFinite()) throw Error(ErrorCode::kSingularSystem, "update is not finite");
  return dp;
}

enum class Termination { kEpsilon, kMaxIterations, kDegenerate };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::kEpsilon: return "epsilon";
    case Termination::kMaxIterations: return "max-iters";
    case Termination::kDegenerate: return "degenerate";
  }
  return "unknown";
}

struct LevelReport {
  std::size_t level = 0;
  std::uint32_t iterations = 0;
  Termination termination = Termination::kEpsilon;
};

template <WarpModel W>
struct AlignResult {
  W warp;
  std::vector<LevelReport> levels;
  /// Mean cost per valid pixel, one entry per iteration, measured before
  /// the update of that iteration.
  std::vector<double> cost_trace;
  Termination termination = Termination::kEpsilon;

  std::uint32_t total_iterations() const {
    std::uint32_t n = 0;
    for (const auto& l : levels) n += l.iterations;
    return n;
  }
  double final_cost() const { return cost_trace.empty() ? 0.0 : cost_trace.back(); }
};

/// Coarse-to-fine inverse-compositional alignment of template_pyr against
/// reference_pyr. The warp maps template pixels into the reference and is
/// expressed at the base resolution (level_scale 1). Throws on insufficient
/// overlap; flat levels end with a degenerate termination instead.
/// Optional cache of template precomputes, one slot per pyramid level.
template <WarpModel W>
using PrecomputeSet = std::vector<std::optional<LevelPrecompute<W>>>;

/// Channels used at a level: the mask's (sorted) or all of them.
inline std::vector<std::uint32_t> level_channels(const FeaturePyramid& pyr, std::size_t level, const FeatureMask* mask) {
  std::vector<std::uint32_t> channels;
  if (mask) {
    channels = mask->levels.at(level);
    std::sort(channels.begin(), channels.end());
  } else {
    channels.resize(pyr.levels[level].channels());
    std::iota(channels.begin(), channels.end(), 0u);
  }
  return channels;
}

/// Precomputes every level listed in levels; base_warp supplies intrinsics.
template <WarpModel W>
PrecomputeSet<W> precompute_pyramid(const FeaturePyramid& pyr, const W& base_warp, const std::vector<std::size_t>& levels,
                                    const FeatureMask* mask = nullptr, ThreadPool* pool = nullptr) {
  PrecomputeSet<W> set(pyr.size());
  for (auto l : levels) {
    const auto channels = level_channels(pyr, l, mask);
    set.at(l) = precompute_level(pyr.levels[l], base_warp.at_level(pyr.level_scale[l]),
                                 std::span<const std::uint32_t>(channels), pool);
  }
  return set;
}

template <WarpModel W>
AlignResult<W> align(const FeaturePyramid& template_pyr, const FeaturePyramid& reference_pyr, const W& initial,
                     const Schedule& schedule, const FeatureMask* mask = nullptr, ThreadPool* pool = nullptr,
                     const PrecomputeSet<W>* precomputed = nullptr) {
  schedule.validate(template_pyr);
  if (template_pyr.size() != reference_pyr.size()) throw Error(ErrorCode::kInvalidArgument, "pyramids differ in depth");
  if (mask) mask->validate(template_pyr);
  AlignResult<W> result;
  result.warp = initial;
  for (std::size_t pos = 0; pos < schedule.levels.size(); ++pos) {
    const std::size_t l = schedule.levels[pos];
    const auto& tmpl = template_pyr.levels[l];
    const auto& ref = reference_pyr.levels[l];
    if (tmpl.channels() != ref.channels()) throw Error(ErrorCode::kChannelMismatch, "pyramid levels differ in channels");
    const std::uint32_t scale = template_pyr.level_scale[l];
    W level_warp = result.warp.at_level(scale);
    std::optional<LevelPrecompute<W>> local;
    if (!precomputed || l >= precomputed->size() || !(*precomputed)[l]) {
      const auto channels = level_channels(template_pyr, l, mask);
      local = precompute_level(tmpl, level_warp, std::span<const std::uint32_t>(channels), pool);
    }
    const LevelPrecompute<W>& pre = local ? *local : *(*precomputed)[l];
    LevelReport report{l, 0, Termination::kMaxIterations};
    if (pre.degenerate) {
      report.termination = Termination::kDegenerate;
    } else {
      const std::uint32_t cap = schedule.cap_for(pos);
      while (report.iterations < cap) {
        const auto ne = accumulate_residual(ref, pre, level_warp, schedule.config.min_valid_fraction, pool);
        result.cost_trace.push_back(ne.mean_cost());
        typename W::Params dp;
        try {
          dp = solve_update(ne, schedule.config.damping_lambda);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kSingularSystem) throw;
          report.termination = Termination::kDegenerate;
          break;
        }
        level_warp = level_warp.compose_with_inverse_update(dp);
        ++report.iterations;
        if (dp.norm() < schedule.config.convergence_epsilon) {
          report.termination = Termination::kEpsilon;
          break;
        }
      }
    }
    result.warp = level_warp.to_base(scale);
    result.levels.push_back(report);
    result.termination = report.termination;
  }
  return result;
}

struct GridAxis {
  int parameter = 0;
  double min = 0.0;
  double max = 0.0;
  double step = 1.0;

  std::size_t count() const {
    if (!(step > 0.0) || !(max >= min)) throw Error(ErrorCode::kInvalidArgument, "grid axis needs step > 0 and max >= min");
    return static_cast<std::size_t>(std::floor((max - min) / step + 1e-9)) + 1;
  }
  double value(std::size_t i) const { return min + static_cast<double>(i) * step; }
};

struct CostCell {
  double p0 = 0.0;
  double p1 = 0.0;
  /// Mean squared residual per valid pixel; empty when overlap is too small.
  std::optional<double> cost;
  double valid_fraction = 0.0;
};

/// Exhaustive evaluation of the alignment cost over a 2-D parameter grid,
/// row-major with axis 0 varying fastest.
struct CostSurface {
  GridAxis axis0;
  GridAxis axis1;
  std::vector<CostCell> cells;

  const CostCell& at(std::size_t i0, std::size_t i1) const { return cells[i1 * axis0.count() + i0]; }
};

/// Mean per-valid-pixel cost of the template against the reference at a warp.
template <WarpModel W>
std::optional<double> mean_cost_at(const FeatureVolume& tmpl, const FeatureVolume& ref, const W& warp,
                                   double min_valid_fraction, double* valid_fraction = nullptr,
                                   ThreadPool* pool = nullptr) {
  if (tmpl.channels() != ref.channels()) throw Error(ErrorCode::kChannelMismatch, "template and reference differ in channels");
  const auto taps = detail::warp_taps(warp.homography(), tmpl.width(), tmpl.height(), ref.width(), ref.height(), pool);
  const std::size_t valid = detail::count_valid(taps);
  const double fraction = static_cast<double>(valid) / static_cast<double>(taps.size());
  if (valid_fraction) *valid_fraction = fraction;
  if (valid == 0 || fraction < min_valid_fraction) return std::nullopt;
  std::vector<std::uint32_t> channels(tmpl.channels());
  std::iota(channels.begin(), channels.end(), 0u);
  return detail::residual_cost(tmpl, ref, channels, taps, pool) / static_cast<double>(valid);
}

template <WarpModel W>
CostSurface cost_surface(const FeatureVolume& tmpl, const FeatureVolume& ref, const W& base, const GridAxis& axis0,
                         const GridAxis& axis1, double min_valid_fraction = kDefaultMinValidFraction,
                         ThreadPool* pool = nullptr) {
  if (axis0.parameter < 0 || axis0.parameter >= W::kDof || axis1.parameter < 0 || axis1.parameter >= W::kDof ||
      axis0.parameter == axis1.parameter) {
    throw Error(ErrorCode::kInvalidArgument, "cost surface axes must be two distinct warp parameters");
  }
  CostSurface surface{axis0, axis1, {}};
  const std::size_t n0 = axis0.count();
  const std::size_t n1 = axis1.count();
  surface.cells.resize(n0 * n1);
  for_each_index(pool, surface.cells.size(), [&](std::size_t i) {
    auto& cell = surface.cells[i];
    cell.p0 = axis0.value(i % n0);
    cell.p1 = axis1.value(i / n0);
    typename W::Params p = W::Params::Zero();
    p(axis0.parameter) = cell.p0;
    p(axis1.parameter) = cell.p1;
    cell.cost = mean_cost_at(tmpl, ref, base.with_offset(p), min_valid_fraction, &cell.valid_fraction);
  });
  return surface;
}

}  // namespace semtex
