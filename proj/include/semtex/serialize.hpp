#pragma once

#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semtex/basin.hpp"
#include "semtex/featsel.hpp"
#include "semtex/mosaic.hpp"
#include "semtex/solver.hpp"
#include "semtex/warp.hpp"

namespace semtex {

using json = nlohmann::ordered_json;

inline json rotation_json(const Mat3& R) {
  const Vec3 w = so3_log(R);
  json m = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m.push_back(R(r, c));
  }
  return {{"axis_angle", {w.x(), w.y(), w.z()}}, {"matrix", m}};
}

inline Mat3 rotation_from_json(const json& j) {
  if (j.contains("matrix")) {
    Mat3 R;
    for (int i = 0; i < 9; ++i) R(i / 3, i % 3) = j.at("matrix").at(i).get<double>();
    return orthonormalize(R);
  }
  const auto& w = j.contains("axis_angle") ? j.at("axis_angle") : j;
  return so3_exp(Vec3(w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>()));
}

inline json intrinsics_json(const Intrinsics& k) { return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}}; }

inline json warp_json(const RotationWarp& w) {
  json j = rotation_json(w.R);
  j["intrinsics"] = intrinsics_json(w.K);
  return j;
}

inline json warp_json(const TranslationWarp& w) { return {{"translation", {w.t.x(), w.t.y()}}}; }

inline json solver_config_json(const SolverConfig& c) {
  return {{"iterations_per_level", c.iterations_per_level},
          {"convergence_epsilon", c.convergence_epsilon},
          {"damping_lambda", c.damping_lambda},
          {"min_valid_fraction", c.min_valid_fraction}};
}

template <WarpModel W>
json align_result_json(const AlignResult<W>& r) {
  json levels = json::array();
  for (const auto& l : r.levels) {
    levels.push_back({{"level", l.level}, {"iterations", l.iterations}, {"termination", to_string(l.termination)}});
  }
  return {{"warp", warp_json(r.warp)},
          {"levels", levels},
          {"total_iterations", r.total_iterations()},
          {"cost_trace", r.cost_trace},
          {"termination", to_string(r.termination)}};
}

inline json basin_config_json(const BasinConfig& c) {
  auto axis = [](const BasinAxis& a) {
    return json{{"parameter", a.parameter}, {"min", a.min}, {"max", a.max}, {"step", a.step}, {"count", a.count()}};
  };
  return {{"axis0", axis(c.axis0)},
          {"axis1", axis(c.axis1)},
          {"success_threshold", c.success_threshold},
          {"max_iterations", c.max_iterations},
          {"fixed", {c.fixed.x(), c.fixed.y(), c.fixed.z()}},
          {"convergence_epsilon", c.convergence_epsilon},
          {"damping_lambda", c.damping_lambda},
          {"min_valid_fraction", c.min_valid_fraction}};
}

inline json basin_result_json(const BasinResult& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"p0_offset", c.offset0},
                     {"p1_offset", c.offset1},
                     {"converged", c.converged},
                     {"final_error_rad", c.final_error},
                     {"iterations", c.iterations},
                     {"reason", c.reason}});
  }
  return {{"config", basin_config_json(r.config)},
          {"levels", r.levels},
          {"converged_cells", r.converged_count()},
          {"cell_area", r.config.cell_area()},
          {"basin_area", r.basin_area},
          {"cells", cells}};
}

/// Shortest round-trip decimal form, identical to the JSON writer's.
inline std::string format_double(double v) { return json(v).dump(); }

inline std::string basin_csv(const BasinResult& r) {
  std::ostringstream out;
  out << "p0_offset,p1_offset,converged,final_error_rad,iterations\n";
  for (const auto& c : r.cells) {
    out << format_double(c.offset0) << ',' << format_double(c.offset1) << ',' << (c.converged ? 1 : 0) << ','
        << format_double(c.final_error) << ',' << c.iterations << '\n';
  }
  return out.str();
}

/// Heat grid: one row per axis-1 value, one column per axis-0 value, 1 for a
/// converged cell and 0 otherwise.
inline std::string basin_heat_grid(const BasinResult& r) {
  std::ostringstream out;
  const std::size_t n0 = r.config.axis0.count();
  out << "p1\\p0";
  for (std::size_t i = 0; i < n0; ++i) out << ',' << format_double(r.config.axis0.value(i));
  out << '\n';
  for (std::size_t row = 0; row * n0 < r.cells.size(); ++row) {
    out << format_double(r.cells[row * n0].offset1);
    for (std::size_t i = 0; i < n0; ++i) out << ',' << (r.cells[row * n0 + i].converged ? 1 : 0);
    out << '\n';
  }
  return out.str();
}

inline std::string cost_surface_csv(const CostSurface& s) {
  std::ostringstream out;
  out << "p0,p1,cost,valid_fraction\n";
  for (const auto& c : s.cells) {
    out << format_double(c.p0) << ',' << format_double(c.p1) << ',' << (c.cost ? format_double(*c.cost) : "nan") << ','
        << format_double(c.valid_fraction) << '\n';
  }
  return out.str();
}

inline json ranked_scores_json(const std::vector<RankedScore>& ranked) {
  json out = json::array();
  for (const auto& r : ranked) {
    out.push_back({{"level", r.score.level},
                   {"channel", r.score.channel},
                   {"texturedness", r.score.texturedness},
                   {"instability", r.score.instability},
                   {"rank", r.rank},
                   {"selected", r.selected}});
  }
  return out;
}

inline json mask_json(const FeatureMask& m) { return {{"levels", m.levels}}; }

inline FeatureMask mask_from_json(const json& j) {
  FeatureMask m;
  if (j.contains("levels")) {
    m.levels = j.at("levels").get<std::vector<std::vector<std::uint32_t>>>();
    return m;
  }
  // A score list: rebuild from the "selected" flags.
  std::size_t levels = 0;
  for (const auto& e : j) levels = std::max(levels, e.at("level").get<std::size_t>() + 1);
  m.levels.resize(levels);
  for (const auto& e : j) {
    if (e.at("selected").get<bool>()) m.levels[e.at("level").get<std::size_t>()].push_back(e.at("channel").get<std::uint32_t>());
  }
  for (auto& l : m.levels) std::sort(l.begin(), l.end());
  return m;
}

inline json frame_report_json(const FrameReport& r) {
  const Vec3 w = so3_log(r.R_wc);
  return {{"frame", r.frame},
          {"rotation_axis_angle", {w.x(), w.y(), w.z()}},
          {"reference_keyframe", r.reference_keyframe},
          {"status", to_string(r.status)},
          {"cost", r.cost}};
}

}  // namespace semtex
