// semtex command-line front end: extract, align, costsurf, basin, select, mosaic.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semtex/basin.hpp"
#include "semtex/conv.hpp"
#include "semtex/featsel.hpp"
#include "semtex/image_io.hpp"
#include "semtex/mosaic.hpp"
#include "semtex/pyramid.hpp"
#include "semtex/serialize.hpp"
#include "semtex/solver.hpp"
#include "semtex/tensor_io.hpp"

namespace fs = std::filesystem;
using semtex::json;

namespace {

constexpr std::uint64_t kDefaultSeed = 7;
constexpr std::uint32_t kDefaultPanoramaWidth = 1024;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Options shared by every subcommand.
struct Common {
  std::string mode = "rgb";
  std::string weights;
  std::uint32_t levels = 0;
  std::uint32_t iters_per_level = semtex::kDefaultItersPerLevel;
  double epsilon = semtex::kDefaultEpsilon;
  double damping = semtex::kDefaultDamping;
  double min_valid = semtex::kDefaultMinValidFraction;
  std::uint32_t working_size = semtex::kConvWorkingSize;
  unsigned threads = 0;
  std::uint64_t seed = kDefaultSeed;
  std::string out;
  std::string config;
};

// Registers options together with their config-file key so values missing
// on the command line can be filled from the JSON config.
class Binder {
 public:
  explicit Binder(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& flag, const std::string& key, T& target, const std::string& help) {
    auto* opt = app_->add_option(flag, target, help)->capture_default_str();
    entries_.push_back({key, opt, [&target](const json& j) { target = j.get<T>(); }});
    return opt;
  }

  CLI::Option* flag(const std::string& flag, const std::string& key, bool& target, const std::string& help) {
    auto* opt = app_->add_flag(flag, target, help);
    entries_.push_back({key, opt, [&target](const json& j) { target = j.get<bool>(); }});
    return opt;
  }

  void apply(const json& cfg) const {
    for (const auto& e : entries_) {
      if (e.opt->count() == 0 && cfg.contains(e.key)) e.set(cfg.at(e.key));
    }
  }

  bool given(const std::string& key, const json& cfg) const {
    for (const auto& e : entries_) {
      if (e.key == key) return e.opt->count() > 0 || cfg.contains(key);
    }
    return false;
  }

 private:
  struct Entry {
    std::string key;
    CLI::Option* opt;
    std::function<void(const json&)> set;
  };
  CLI::App* app_;
  std::vector<Entry> entries_;
};

void add_common(Binder& b, CLI::App* app, Common& c, bool with_out_default_dir) {
  b.add("--mode", "mode", c.mode, "Feature pyramid: rgb or conv")->check(CLI::IsMember({"rgb", "conv"}));
  b.add("--weights", "weights", c.weights, "CWTS weight file (conv mode; falls back to $SEMTEX_WEIGHTS)");
  b.add("--levels", "levels", c.levels, "Pyramid levels to build (0: 5 for rgb, every conv layer for conv)");
  b.add("--iters-per-level", "iters_per_level", c.iters_per_level, "Iteration cap per pyramid level");
  b.add("--epsilon", "epsilon", c.epsilon, "Convergence threshold on the update norm");
  b.add("--damping", "damping", c.damping, "Relative Tikhonov damping");
  b.add("--min-valid", "min_valid_fraction", c.min_valid, "Minimum fraction of valid warped pixels");
  b.add("--working-size", "working_size", c.working_size, "Square input size of the conv stack");
  b.add("--threads", "threads", c.threads, "Worker threads (0: hardware count); never changes outputs");
  b.add("--seed", "seed", c.seed, "Seed for randomized operations");
  b.add("--out", "out", c.out, with_out_default_dir ? "Output directory" : "Output file (default: stdout)");
  app->add_option("--config", c.config, "JSON config file; command-line flags take precedence");
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw semtex::Error(semtex::ErrorCode::kIo, path + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw semtex::Error(semtex::ErrorCode::kIo, path + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw semtex::Error(semtex::ErrorCode::kIo, path.string() + ": cannot write");
  out << text;
}

void emit_json(const std::string& out, const json& j) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_text(out, j.dump(2) + "\n");
  }
}

fs::path out_dir(const Common& c) {
  const fs::path dir = c.out.empty() ? fs::path("semtex_out") : fs::path(c.out);
  fs::create_directories(dir);
  return dir;
}

semtex::Vec3 vec3_from(const std::vector<double>& v, const char* what) {
  if (v.size() != 3) throw UsageError(std::string(what) + " needs three comma-separated values");
  return {v[0], v[1], v[2]};
}

/// Mode, weights and pyramid construction for one run.
class Pipeline {
 public:
  Pipeline(const Common& c, bool weights_given) : c_(c) {
    if (c.mode == "rgb") {
      if (weights_given) throw UsageError("rgb mode does not take --weights");
    } else {
      std::string path = c.weights;
      if (path.empty()) {
        if (const char* env = std::getenv("SEMTEX_WEIGHTS")) path = env;
      }
      if (path.empty()) throw UsageError("conv mode needs --weights or SEMTEX_WEIGHTS");
      weights_path_ = path;
      net_ = semtex::load_weights(path);
      if (c.levels > 0) {
        if (c.levels > net_->layers.size()) throw UsageError("--levels exceeds the number of conv layers");
        net_->layers.resize(c.levels);
      }
    }
    if (c.threads != 1) pool_ = std::make_unique<semtex::ThreadPool>(c.threads == 0 ? semtex::ThreadPool::default_threads() : c.threads);
  }

  semtex::FeaturePyramid extract(const semtex::FeatureVolume& img) const {
    if (net_) return semtex::build_conv_pyramid(semtex::to_rgb(img), *net_, c_.working_size, pool());
    return semtex::build_rgb_pyramid(img, c_.levels == 0 ? semtex::kDefaultRgbLevels : c_.levels);
  }

  semtex::Extractor extractor() const {
    return [this](const semtex::FeatureVolume& img) { return extract(img); };
  }

  semtex::SolverConfig solver(std::size_t scheduled_levels) const {
    semtex::SolverConfig s;
    s.iterations_per_level.assign(scheduled_levels, c_.iters_per_level);
    s.convergence_epsilon = c_.epsilon;
    s.damping_lambda = c_.damping;
    s.min_valid_fraction = c_.min_valid;
    return s;
  }

  std::size_t level_count() const {
    if (net_) return net_->layers.size();
    return c_.levels == 0 ? semtex::kDefaultRgbLevels : c_.levels;
  }

  semtex::Schedule schedule(const semtex::FeaturePyramid& pyr) const {
    return semtex::full_schedule(pyr, solver(pyr.size()));
  }

  semtex::ThreadPool* pool() const { return pool_.get(); }

  /// Self-description attached to every output. Thread count is left out
  /// because it never changes results.
  json echo() const {
    json j{{"mode", c_.mode}};
    if (net_) {
      j["weights"] = weights_path_;
      j["working_size"] = c_.working_size;
      j["channel_means"] = semtex::kVggChannelMeans;
      j["levels"] = net_->layers.size();
    } else {
      j["levels"] = c_.levels == 0 ? semtex::kDefaultRgbLevels : c_.levels;
    }
    j["iters_per_level"] = c_.iters_per_level;
    j["epsilon"] = c_.epsilon;
    j["damping"] = c_.damping;
    j["min_valid_fraction"] = c_.min_valid;
    j["seed"] = c_.seed;
    return j;
  }

 private:
  const Common& c_;
  std::optional<semtex::NetworkWeights> net_;
  std::string weights_path_;
  std::unique_ptr<semtex::ThreadPool> pool_;
};

semtex::RotationWarp base_warp(const semtex::FeaturePyramid& pyr, const semtex::Vec3& omega) {
  return {semtex::so3_exp(omega), semtex::Intrinsics::default_for(pyr.base_width, pyr.base_height)};
}

semtex::BasinAxis axis_from(const std::vector<double>& v, const char* what) {
  if (v.size() != 4) throw UsageError(std::string(what) + " needs parameter,min,max,step");
  return {static_cast<int>(v[0]), v[1], v[2], v[3]};
}

std::vector<std::size_t> parse_levels(const std::vector<std::size_t>& given, const semtex::FeaturePyramid& pyr) {
  if (!given.empty()) return given;
  return semtex::full_schedule(pyr).levels;
}

// ---------------------------------------------------------------- commands

struct Command {
  CLI::App* app = nullptr;
  Common common;
  std::unique_ptr<Binder> binder;
  json config;

  void prepare() {
    if (!common.config.empty()) {
      config = read_json(common.config);
      binder->apply(config);
    }
  }
};

int run_extract(Command& cmd, const std::string& image) {
  const Pipeline p(cmd.common, cmd.binder->given("weights", cmd.config));
  const auto pyr = p.extract(semtex::read_image(image));
  const fs::path dir = out_dir(cmd.common);
  const auto bands = semtex::resolution_bands(pyr);
  json levels = json::array();
  for (std::size_t l = 0; l < pyr.size(); ++l) {
    char name[32];
    std::snprintf(name, sizeof name, "level_%02zu.ftns", l);
    semtex::write_tensor(pyr.levels[l], (dir / name).string());
    levels.push_back({{"index", l},
                      {"file", name},
                      {"channels", pyr.levels[l].channels()},
                      {"height", pyr.levels[l].height()},
                      {"width", pyr.levels[l].width()},
                      {"level_scale", pyr.level_scale[l]},
                      {"band", bands[l]}});
  }
  json manifest{{"command", "extract"}, {"input", image}, {"config", p.echo()}};
  manifest["preprocessing"] = cmd.common.mode == "conv"
                                  ? json{{"crop", "center square"},
                                         {"resize", "bilinear"},
                                         {"working_size", cmd.common.working_size},
                                         {"subtract_channel_means", semtex::kVggChannelMeans}}
                                  : json{{"downsample", "5-tap binomial, reflect-101 borders, factor 2"}};
  manifest["base_width"] = pyr.base_width;
  manifest["base_height"] = pyr.base_height;
  manifest["levels"] = levels;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return 0;
}

struct AlignArgs {
  std::string tmpl;
  std::string ref;
  std::vector<double> init{0.0, 0.0, 0.0};
  std::string mask;
  std::string warp = "rotation";
};

int run_align(Command& cmd, const AlignArgs& a) {
  const Pipeline p(cmd.common, cmd.binder->given("weights", cmd.config));
  const auto tp = p.extract(semtex::read_image(a.tmpl));
  const auto rp = p.extract(semtex::read_image(a.ref));
  std::optional<semtex::FeatureMask> mask;
  if (!a.mask.empty()) mask = semtex::mask_from_json(read_json(a.mask));
  const auto schedule = p.schedule(tp);
  json out{{"command", "align"}, {"template", a.tmpl}, {"reference", a.ref}, {"config", p.echo()}};
  out["config"]["warp"] = a.warp;
  out["config"]["initial"] = a.init;
  if (mask) out["config"]["mask"] = a.mask;
  semtex::Termination termination;
  if (a.warp == "rotation") {
    const auto r = semtex::align(tp, rp, base_warp(tp, vec3_from(a.init, "--init")), schedule, mask ? &*mask : nullptr,
                                 p.pool());
    out["result"] = semtex::align_result_json(r);
    termination = r.termination;
  } else {
    if (a.init.size() != 2) throw UsageError("translation --init needs two values");
    const semtex::TranslationWarp init{semtex::Vec2(a.init[0], a.init[1])};
    const auto r = semtex::align(tp, rp, init, schedule, mask ? &*mask : nullptr, p.pool());
    out["result"] = semtex::align_result_json(r);
    termination = r.termination;
  }
  const bool converged = termination == semtex::Termination::kEpsilon;
  out["converged"] = converged;
  emit_json(cmd.common.out, out);
  return converged ? 0 : 2;
}

struct CostArgs {
  std::string tmpl;
  std::string ref;
  std::size_t level = 0;
  std::vector<double> axis0{1, -0.5, 0.5, 0.04};
  std::vector<double> axis1{0, -0.5, 0.5, 0.04};
  std::vector<double> around{0.0, 0.0, 0.0};
};

int run_costsurf(Command& cmd, const CostArgs& a) {
  const Pipeline p(cmd.common, cmd.binder->given("weights", cmd.config));
  const auto tp = p.extract(semtex::read_image(a.tmpl));
  const auto rp = p.extract(semtex::read_image(a.ref));
  if (a.level >= tp.size()) throw UsageError("--level outside the pyramid");
  const auto ax0 = axis_from(a.axis0, "--axis0");
  const auto ax1 = axis_from(a.axis1, "--axis1");
  const semtex::GridAxis g0{ax0.parameter, ax0.min, ax0.max, ax0.step};
  const semtex::GridAxis g1{ax1.parameter, ax1.min, ax1.max, ax1.step};
  const auto scale = tp.level_scale[a.level];
  const auto warp = base_warp(tp, vec3_from(a.around, "--around")).at_level(scale);
  const auto surface = semtex::cost_surface(tp.levels[a.level], rp.levels[a.level], warp, g0, g1, cmd.common.min_valid, p.pool());
  const fs::path dir = out_dir(cmd.common);
  write_text(dir / "cost_surface.csv", semtex::cost_surface_csv(surface));
  json meta{{"command", "costsurf"}, {"template", a.tmpl}, {"reference", a.ref}, {"config", p.echo()}};
  meta["config"]["level"] = a.level;
  meta["config"]["axis0"] = a.axis0;
  meta["config"]["axis1"] = a.axis1;
  meta["config"]["around"] = a.around;
  const semtex::CostCell* best = nullptr;
  for (const auto& c : surface.cells) {
    if (c.cost && (!best || *c.cost < *best->cost)) best = &c;
  }
  if (best) meta["minimum"] = {{"p0", best->p0}, {"p1", best->p1}, {"cost", *best->cost}};
  meta["cells"] = surface.cells.size();
  write_text(dir / "cost_surface.json", meta.dump(2) + "\n");
  return 0;
}

struct BasinArgs {
  std::string tmpl;
  std::string ref;
  std::vector<double> truth{0.0, 0.0, 0.0};
  std::vector<double> axis0{1, -0.5, 0.5, 0.04};
  std::vector<double> axis1{0, -0.5, 0.5, 0.04};
  double threshold = semtex::kSuccessThreshold;
  std::uint32_t budget = semtex::kBasinIterationBudget;
  std::vector<std::size_t> sweep_levels;
  bool per_level = false;
  std::string mask;
  double random_fraction = 0.0;
  std::string fraction_scores;
  std::uint32_t repeats = 20;
  std::vector<double> fractions;
};

semtex::BasinConfig basin_config(const Common& c, const BasinArgs& a) {
  semtex::BasinConfig cfg;
  cfg.axis0 = axis_from(a.axis0, "--axis0");
  cfg.axis1 = axis_from(a.axis1, "--axis1");
  cfg.success_threshold = a.threshold;
  cfg.max_iterations = a.budget;
  cfg.convergence_epsilon = c.epsilon;
  cfg.damping_lambda = c.damping;
  cfg.min_valid_fraction = c.min_valid;
  cfg.validate();
  return cfg;
}

std::string fraction_label(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", f);
  return buf;
}

int run_basin(Command& cmd, BasinArgs a) {
  const Pipeline p(cmd.common, cmd.binder->given("weights", cmd.config));
  const auto tp = p.extract(semtex::read_image(a.tmpl));
  const auto rp = p.extract(semtex::read_image(a.ref));
  const auto cfg = basin_config(cmd.common, a);
  const auto truth = base_warp(tp, vec3_from(a.truth, "--truth"));
  const auto levels = parse_levels(a.sweep_levels, tp);
  std::optional<semtex::FeatureMask> mask;
  if (!a.mask.empty()) mask = semtex::mask_from_json(read_json(a.mask));
  if (a.random_fraction > 0.0) {
    if (mask) throw UsageError("--mask and --random-fraction are exclusive");
    mask = semtex::random_mask(semtex::channel_counts(tp), a.random_fraction, cmd.common.seed);
  }
  if (mask) mask->validate(tp);
  const fs::path dir = out_dir(cmd.common);
  json meta{{"command", "basin"}, {"template", a.tmpl}, {"reference", a.ref}, {"config", p.echo()}};
  meta["config"]["truth"] = a.truth;
  meta["config"]["basin"] = semtex::basin_config_json(cfg);
  if (!a.mask.empty()) meta["config"]["mask"] = a.mask;
  if (a.random_fraction > 0.0) meta["config"]["random_fraction"] = a.random_fraction;

  if (!a.fraction_scores.empty()) {
    // Selected-versus-random comparison over a range of subset fractions.
    if (mask) throw UsageError("--fraction-sweep builds its own masks");
    if (a.fractions.empty()) {
      for (int i = 1; i <= 20; ++i) a.fractions.push_back(0.05 * i);
    }
    const auto scores_json = read_json(a.fraction_scores);
    std::vector<semtex::FeatureScore> scores;
    for (const auto& e : scores_json.contains("scores") ? scores_json.at("scores") : scores_json) {
      scores.push_back({e.at("level").get<std::size_t>(), e.at("channel").get<std::uint32_t>(),
                        e.at("texturedness").get<double>(), e.at("instability").get<double>()});
    }
    std::ostringstream csv;
    csv << "fraction,selected_area,random_mean_area,random_min_area,random_max_area\n";
    json rows = json::array();
    for (double f : a.fractions) {
      const auto selected = semtex::mask_from_ranked(semtex::rank_scores(scores, f), tp.size());
      const double sel = semtex::sweep(tp, rp, truth, cfg, levels, &selected, p.pool()).basin_area;
      double sum = 0.0, lo = INFINITY, hi = -INFINITY;
      for (std::uint32_t r = 0; r < a.repeats; ++r) {
        const auto rm = semtex::random_mask(semtex::channel_counts(tp), f, cmd.common.seed + r);
        const double area = semtex::sweep(tp, rp, truth, cfg, levels, &rm, p.pool()).basin_area;
        sum += area;
        lo = std::min(lo, area);
        hi = std::max(hi, area);
      }
      const double mean = a.repeats ? sum / a.repeats : 0.0;
      csv << fraction_label(f) << ',' << semtex::format_double(sel) << ',' << semtex::format_double(mean) << ','
          << semtex::format_double(a.repeats ? lo : 0.0) << ',' << semtex::format_double(a.repeats ? hi : 0.0) << '\n';
      rows.push_back({{"fraction", f}, {"selected_area", sel}, {"random_mean_area", mean}});
    }
    meta["config"]["fraction_scores"] = a.fraction_scores;
    meta["config"]["repeats"] = a.repeats;
    meta["config"]["levels_scheduled"] = levels;
    meta["fraction_sweep"] = rows;
    write_text(dir / "fraction_sweep.csv", csv.str());
    write_text(dir / "basin.json", meta.dump(2) + "\n");
    return 0;
  }

  if (a.per_level) {
    json results = json::array();
    for (const auto& lb : semtex::per_level_sweep(tp, rp, truth, cfg, mask ? &*mask : nullptr, p.pool())) {
      char name[40];
      std::snprintf(name, sizeof name, "basin_level_%02zu.csv", lb.level);
      write_text(dir / name, semtex::basin_csv(lb.result));
      json r = semtex::basin_result_json(lb.result);
      r.erase("config");
      r["level"] = lb.level;
      r["band"] = lb.band;
      results.push_back(r);
    }
    meta["per_level"] = results;
  } else {
    const auto r = semtex::sweep(tp, rp, truth, cfg, levels, mask ? &*mask : nullptr, p.pool());
    write_text(dir / "basin.csv", semtex::basin_csv(r));
    write_text(dir / "basin_grid.csv", semtex::basin_heat_grid(r));
    json rj = semtex::basin_result_json(r);
    rj.erase("config");
    meta["result"] = rj;
  }
  write_text(dir / "basin.json", meta.dump(2) + "\n");
  return 0;
}

struct SelectArgs {
  std::vector<std::string> frames;
  std::string rotations;
  double fraction = 0.25;
  double tex_weight = 1.0;
  double inst_weight = 1.0;
  std::vector<std::string> merge;
};

std::vector<semtex::FeatureScore> scores_from_json(const json& j) {
  std::vector<semtex::FeatureScore> out;
  for (const auto& e : j.contains("scores") ? j.at("scores") : j) {
    out.push_back({e.at("level").get<std::size_t>(), e.at("channel").get<std::uint32_t>(),
                   e.at("texturedness").get<double>(), e.at("instability").get<double>()});
  }
  return out;
}

std::vector<semtex::FeatureScore> score_sequence(const Pipeline& p, const std::vector<std::string>& frames,
                                                 const std::vector<semtex::Mat3>& R_wc, double min_valid) {
  std::vector<semtex::FeaturePyramid> pyrs;
  for (const auto& f : frames) pyrs.push_back(p.extract(semtex::read_image(f)));
  const auto& first = pyrs.front();
  const auto K = semtex::Intrinsics::default_for(first.base_width, first.base_height);
  std::vector<std::pair<std::size_t, std::uint32_t>> items;
  for (std::size_t l = 0; l < first.size(); ++l) {
    for (std::uint32_t c = 0; c < first.levels[l].channels(); ++c) items.emplace_back(l, c);
  }
  std::vector<semtex::FeatureScore> scores(items.size());
  semtex::for_each_index(p.pool(), items.size(), [&](std::size_t i) {
    const auto [l, c] = items[i];
    const std::uint32_t idx[] = {c};
    std::vector<semtex::StabilityFrame<semtex::RotationWarp>> seq;
    double tex = 0.0;
    for (std::size_t f = 0; f < pyrs.size(); ++f) {
      auto act = pyrs[f].levels[l].select_channels(idx);
      tex += semtex::texturedness_score(act);
      // Frame f pixels mapped into frame 1.
      const semtex::RotationWarp to_first{R_wc.front().transpose() * R_wc[f], K};
      seq.push_back({std::move(act), to_first.at_level(first.level_scale[l])});
    }
    scores[i] = {l, c, tex / static_cast<double>(pyrs.size()), semtex::stability_score(seq, min_valid)};
  });
  return scores;
}

int run_select(Command& cmd, const SelectArgs& a) {
  const Pipeline p(cmd.common, cmd.binder->given("weights", cmd.config));
  json meta{{"command", "select"}, {"config", p.echo()}};
  meta["config"]["fraction"] = a.fraction;
  meta["config"]["rank_weights"] = {{"texturedness", a.tex_weight}, {"instability", a.inst_weight}};
  meta["config"]["combination"] = "sum of ranks";
  meta["config"]["stability_normalization"] = "per valid pixel";
  std::vector<semtex::FeatureScore> scores;
  if (!a.merge.empty()) {
    // Mean of previously computed score lists, e.g. one per sequence.
    std::vector<std::vector<semtex::FeatureScore>> lists;
    for (const auto& m : a.merge) lists.push_back(scores_from_json(read_json(m)));
    scores = semtex::average_scores(lists);
    meta["config"]["merged"] = a.merge;
  } else {
    if (a.frames.size() < 2) throw UsageError("select needs at least two frames or --merge");
    std::vector<semtex::Mat3> R(a.frames.size(), semtex::Mat3::Identity());
    if (!a.rotations.empty()) {
      const auto rj = read_json(a.rotations);
      if (rj.size() != a.frames.size()) throw UsageError("--rotations needs one rotation per frame");
      for (std::size_t i = 0; i < rj.size(); ++i) R[i] = semtex::rotation_from_json(rj[i]);
      meta["config"]["rotations"] = a.rotations;
    }
    scores = score_sequence(p, a.frames, R, cmd.common.min_valid);
    meta["frames"] = a.frames;
  }
  const semtex::RankWeights weights{a.tex_weight, a.inst_weight};
  const auto ranked = semtex::rank_scores(scores, a.fraction, weights);
  std::size_t levels = 0;
  for (const auto& s : scores) levels = std::max(levels, s.level + 1);
  const auto mask = semtex::mask_from_ranked(ranked, levels);
  const fs::path dir = out_dir(cmd.common);
  json scores_out = meta;
  scores_out["scores"] = semtex::ranked_scores_json(ranked);
  write_text(dir / "scores.json", scores_out.dump(2) + "\n");
  json mask_out = meta;
  mask_out["levels"] = semtex::mask_json(mask).at("levels");
  write_text(dir / "mask.json", mask_out.dump(2) + "\n");
  return 0;
}

struct MosaicArgs {
  std::vector<std::string> frames;
  std::uint32_t width = kDefaultPanoramaWidth;
  double spawn = 0.35;
  double lost_multiple = 10.0;
};

int run_mosaic(Command& cmd, const MosaicArgs& a) {
  const Pipeline p(cmd.common, cmd.binder->given("weights", cmd.config));
  semtex::TrackerConfig tc;
  tc.spawn_threshold = a.spawn;
  tc.lost_cost_multiple = a.lost_multiple;
  tc.solver = p.solver(p.level_count());
  semtex::Tracker tracker(p.extractor(), tc, p.pool());
  const fs::path dir = out_dir(cmd.common);
  std::ostringstream traj;
  std::size_t lost = 0;
  for (const auto& f : a.frames) {
    const auto img = semtex::to_rgb(semtex::read_image(f));
    auto report = tracker.process(img);
    lost += report.status == semtex::TrackStatus::kLost ? 1 : 0;
    traj << semtex::frame_report_json(report).dump() << '\n';
  }
  const auto pano = semtex::render_panorama(tracker.keyframes(), a.width, p.pool());
  semtex::write_png(pano.image, (dir / "panorama.png").string());
  write_text(dir / "trajectory.jsonl", traj.str());
  json meta{{"command", "mosaic"}, {"config", p.echo()}};
  meta["config"]["panorama_width"] = a.width;
  meta["config"]["spawn_threshold"] = a.spawn;
  meta["config"]["lost_cost_multiple"] = a.lost_multiple;
  meta["frames"] = a.frames.size();
  meta["lost_frames"] = lost;
  json kfs = json::array();
  for (const auto& kf : tracker.keyframes()) kfs.push_back({{"id", kf.id}, {"rotation", semtex::rotation_json(kf.R_wk)}});
  meta["keyframes"] = kfs;
  write_text(dir / "mosaic.json", meta.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semtex: dense image alignment on RGB and CNN feature pyramids"};
  app.require_subcommand(1);

  Command extract, align, costsurf, basin, select, mosaic;
  auto setup = [&](Command& cmd, const char* name, const char* help, bool dir_out) {
    cmd.app = app.add_subcommand(name, help);
    cmd.binder = std::make_unique<Binder>(cmd.app);
    add_common(*cmd.binder, cmd.app, cmd.common, dir_out);
  };
  setup(extract, "extract", "Write every pyramid level as FTNS plus manifest.json", true);
  setup(align, "align", "Align two images; exit 0 converged, 2 not converged, 1 error", false);
  setup(costsurf, "costsurf", "Evaluate the alignment cost over a 2-D parameter grid", true);
  setup(basin, "basin", "Convergence-basin sweep around a known rotation", true);
  setup(select, "select", "Score feature channels and select a subset", true);
  setup(mosaic, "mosaic", "Track a rotating sequence and render a spherical panorama", true);

  std::string extract_image;
  extract.app->add_option("image", extract_image, "Input image (PNG, PGM or PPM)")->required();

  AlignArgs aa;
  align.app->add_option("template", aa.tmpl, "Template image")->required();
  align.app->add_option("reference", aa.ref, "Reference image")->required();
  align.binder->add("--init", "init", aa.init, "Initial warp parameters (axis-angle, or tx,ty)")->delimiter(',');
  align.binder->add("--mask", "mask", aa.mask, "Feature mask JSON from select");
  align.binder->add("--warp", "warp", aa.warp, "Warp model")->check(CLI::IsMember({"rotation", "translation"}));

  CostArgs ca;
  costsurf.app->add_option("template", ca.tmpl, "Template image")->required();
  costsurf.app->add_option("reference", ca.ref, "Reference image")->required();
  costsurf.binder->add("--level", "level", ca.level, "Pyramid level to evaluate");
  costsurf.binder->add("--axis0", "axis0", ca.axis0, "parameter,min,max,step of the first axis")->delimiter(',');
  costsurf.binder->add("--axis1", "axis1", ca.axis1, "parameter,min,max,step of the second axis")->delimiter(',');
  costsurf.binder->add("--around", "around", ca.around, "Rotation the grid is centred on (axis-angle)")->delimiter(',');

  BasinArgs ba;
  basin.app->add_option("template", ba.tmpl, "Template image")->required();
  basin.app->add_option("reference", ba.ref, "Reference image")->required();
  basin.binder->add("--truth", "truth", ba.truth, "Ground-truth rotation template->reference (axis-angle)")->delimiter(',');
  basin.binder->add("--axis0", "axis0", ba.axis0, "parameter,min,max,step of the first axis")->delimiter(',');
  basin.binder->add("--axis1", "axis1", ba.axis1, "parameter,min,max,step of the second axis")->delimiter(',');
  basin.binder->add("--threshold", "success_threshold", ba.threshold, "Success threshold (rad)");
  basin.binder->add("--budget", "max_iterations", ba.budget, "Iteration budget per cell, split over levels");
  basin.binder->add("--sweep-levels", "sweep_levels", ba.sweep_levels, "Levels to schedule, coarse to fine (default all)")
      ->delimiter(',');
  basin.binder->flag("--per-level", "per_level", ba.per_level, "One single-level sweep per pyramid level");
  basin.binder->add("--mask", "mask", ba.mask, "Feature mask JSON from select");
  basin.binder->add("--random-fraction", "random_fraction", ba.random_fraction, "Seeded random channel subset (0: off)");
  basin.binder->add("--fraction-sweep", "fraction_sweep", ba.fraction_scores,
                    "scores.json from select: compare selected and random subsets over fractions");
  basin.binder->add("--repeats", "repeats", ba.repeats, "Random subsets per fraction in a fraction sweep");
  basin.binder->add("--fractions", "fractions", ba.fractions, "Fractions for the sweep (default 0.05..1.00 step 0.05)")
      ->delimiter(',');

  SelectArgs sa;
  select.app->add_option("frames", sa.frames, "Sequence frames; the first is the stability reference");
  select.binder->add("--rotations", "rotations", sa.rotations, "JSON list of per-frame camera rotations (default static)");
  select.binder->add("--fraction", "fraction", sa.fraction, "Fraction of channels kept per level");
  select.binder->add("--texturedness-weight", "texturedness_weight", sa.tex_weight, "Weight of the texturedness rank");
  select.binder->add("--instability-weight", "instability_weight", sa.inst_weight, "Weight of the instability rank");
  select.binder->add("--merge", "merge", sa.merge, "Average these scores.json files instead of scoring frames");

  MosaicArgs ma;
  mosaic.app->add_option("frames", ma.frames, "Frames in capture order")->required();
  mosaic.binder->add("--pano-width", "panorama_width", ma.width, "Panorama width (height is half)");
  mosaic.binder->add("--spawn-threshold", "spawn_threshold", ma.spawn, "Keyframe spawn distance (rad)");
  mosaic.binder->add("--lost-multiple", "lost_cost_multiple", ma.lost_multiple, "Lost when cost exceeds this multiple of the noise floor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (auto* cmd : {&extract, &align, &costsurf, &basin, &select, &mosaic}) {
      if (!cmd->app->parsed()) continue;
      cmd->prepare();
      if (cmd == &extract) return run_extract(*cmd, extract_image);
      if (cmd == &align) return run_align(*cmd, aa);
      if (cmd == &costsurf) return run_costsurf(*cmd, ca);
      if (cmd == &basin) return run_basin(*cmd, ba);
      if (cmd == &select) return run_select(*cmd, sa);
      return run_mosaic(*cmd, ma);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
