#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "semtex/image_io.hpp"
#include "semtex/so3.hpp"
#include "support/synthetic.hpp"

namespace semtex {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string kCli = SEMTEX_CLI;
const std::string kData = SEMTEX_TEST_DATA;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("semtex_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Renders the shared synthetic scene from a camera rotated by omega.
  std::string scene(const std::string& name, const Vec3& omega, std::uint32_t size = 96) const {
    static const testing::SphereTexture tex(61);
    write_png(testing::render(tex, so3_exp(omega), size, size), path(name));
    return path(name);
  }

  int run(const std::string& args, std::string* out = nullptr) const {
    const std::string capture = path("stdout.txt");
    const int status = std::system((kCli + " " + args + " > " + capture + " 2> " + path("stderr.txt")).c_str());
    if (out) *out = read(capture);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static std::string read(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

TEST_F(Cli, HelpListsDefaults) {
  std::string out;
  EXPECT_EQ(run("align --help", &out), 0);
  for (const char* s : {"--iters-per-level", "50", "1e-07", "1e-08", "0.25", "--threads", "--seed", "7", "rgb"})
    EXPECT_NE(out.find(s), std::string::npos) << s;
  EXPECT_EQ(run("basin --help", &out), 0);
  for (const char* s : {"0.07", "1000", "0.04", "--fraction-sweep"}) EXPECT_NE(out.find(s), std::string::npos) << s;
  EXPECT_NE(run(""), 0);
}

TEST_F(Cli, ExtractRgb) {
  const auto img = scene("a.png", Vec3::Zero(), 64);
  ASSERT_EQ(run("extract " + img + " --out " + path("rgb")), 0);
  const auto manifest = json::parse(read(path("rgb/manifest.json")));
  ASSERT_EQ(manifest.at("levels").size(), 5u);
  for (std::size_t l = 0; l < 5; ++l) {
    EXPECT_EQ(manifest["levels"][l]["width"], 64u >> l);
    char name[32];
    std::snprintf(name, sizeof name, "level_%02zu.ftns", l);
    EXPECT_TRUE(fs::exists(path("rgb/") + name)) << name;
  }
  EXPECT_EQ(manifest.at("config").at("mode"), "rgb");
}

TEST_F(Cli, ExtractConvWithFixtureWeights) {
  const auto img = scene("a.png", Vec3::Zero(), 64);
  const std::string weights = kData + "/fixture.cwts";
  ASSERT_EQ(run("extract " + img + " --mode conv --weights " + weights + " --out " + path("conv")), 0);
  const auto manifest = json::parse(read(path("conv/manifest.json")));
  ASSERT_EQ(manifest.at("levels").size(), 2u);
  EXPECT_EQ(manifest["levels"][0]["channels"], 4);
  EXPECT_EQ(manifest["levels"][0]["width"], 112);
  EXPECT_EQ(manifest["levels"][1]["channels"], 6);
  EXPECT_EQ(manifest["levels"][1]["width"], 112);
  EXPECT_EQ(manifest.at("preprocessing").at("working_size"), 224);
}

TEST_F(Cli, WeightRules) {
  const auto img = scene("a.png", Vec3::Zero(), 64);
  const std::string weights = kData + "/fixture.cwts";
  EXPECT_EQ(run("extract " + img + " --mode conv --out " + path("x")), 1);
  EXPECT_NE(read(path("stderr.txt")).find("usage error"), std::string::npos);
  EXPECT_EQ(run("extract " + img + " --weights " + weights + " --out " + path("x")), 1);
  ::setenv("SEMTEX_WEIGHTS", weights.c_str(), 1);
  EXPECT_EQ(run("extract " + img + " --mode conv --out " + path("env")), 0);
  // The environment fallback never forces weights on rgb mode.
  EXPECT_EQ(run("extract " + img + " --out " + path("rgb")), 0);
  ::unsetenv("SEMTEX_WEIGHTS");
}

TEST_F(Cli, AlignIdenticalAndKnownRotation) {
  const auto a = scene("a.png", Vec3::Zero());
  std::string out;
  ASSERT_EQ(run("align " + a + " " + a, &out), 0);
  auto j = json::parse(out);
  for (double w : j["result"]["warp"]["axis_angle"]) EXPECT_NEAR(w, 0.0, 1e-9);
  EXPECT_EQ(j["converged"], true);

  const Vec3 omega(0.01, -0.02, 0.005);
  const auto b = scene("b.png", omega);
  ASSERT_EQ(run("align " + a + " " + b + " --out " + path("ab.json")), 0);
  j = json::parse(read(path("ab.json")));
  // The warp carries template pixels into the reference: R = R_b^T R_a.
  const Mat3 expected = so3_exp(omega).transpose();
  Mat3 got;
  for (int i = 0; i < 9; ++i) got(i / 3, i % 3) = j["result"]["warp"]["matrix"][i].get<double>();
  EXPECT_LT(angular_distance(got, expected), 1e-3);
}

TEST_F(Cli, AlignExitCodes) {
  const auto a = scene("a.png", Vec3::Zero());
  EXPECT_EQ(run("align " + a + " " + path("missing.png")), 1);
  EXPECT_NE(read(path("stderr.txt")).find("missing.png"), std::string::npos);
  const auto b = scene("b.png", Vec3(0.0, 0.04, 0.0));
  // A single iteration per level cannot reach the convergence threshold.
  EXPECT_EQ(run("align " + a + " " + b + " --iters-per-level 1"), 2);
}

TEST_F(Cli, ConfigPrecedence) {
  const auto a = scene("a.png", Vec3::Zero());
  std::ofstream(path("cfg.json")) << R"({"iters_per_level": 3, "epsilon": 1e-5, "levels": 3})";
  std::string out;
  ASSERT_EQ(run("align " + a + " " + a + " --config " + path("cfg.json") + " --iters-per-level 4", &out), 0);
  const auto echo = json::parse(out).at("config");
  EXPECT_EQ(echo["iters_per_level"], 4);
  EXPECT_EQ(echo["epsilon"], 1e-5);
  EXPECT_EQ(echo["levels"], 3);
  EXPECT_EQ(echo["damping"], 1e-8);
  EXPECT_FALSE(echo.contains("threads"));
}

TEST_F(Cli, BasinOnIdenticalImages) {
  const auto a = scene("a.png", Vec3::Zero(), 64);
  ASSERT_EQ(run("basin " + a + " " + a + " --axis0 1,-0.1,0.1,0.1 --axis1 0,-0.1,0.1,0.1 --out " + path("basin")), 0);
  const auto j = json::parse(read(path("basin/basin.json")));
  EXPECT_GT(j["result"]["basin_area"].get<double>(), 0.0);
  const auto& origin = j["result"]["cells"][4];
  EXPECT_EQ(origin["p0_offset"], 0.0);
  EXPECT_EQ(origin["converged"], true);
  EXPECT_EQ(j["config"]["basin"]["success_threshold"], 0.07);
  const auto csv = read(path("basin/basin.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "p0_offset,p1_offset,converged,final_error_rad,iterations");
  EXPECT_TRUE(fs::exists(path("basin/basin_grid.csv")));
}

TEST_F(Cli, SelectFullMaskMatchesUnmasked) {
  const auto a = scene("a.png", Vec3::Zero(), 64);
  const auto b = scene("b.png", Vec3(0.0, 0.01, 0.0), 64);
  const auto c = scene("c.png", Vec3(0.0, 0.02, 0.0), 64);
  std::ofstream(path("rot.json")) << "[[0,0,0],[0,0.01,0],[0,0.02,0]]";
  const std::string weights = kData + "/fixture.cwts";
  const std::string conv = " --mode conv --weights " + weights;
  ASSERT_EQ(run("select " + a + " " + b + " " + c + " --rotations " + path("rot.json") + " --fraction 1.0" + conv +
                " --out " + path("sel")), 0);
  const auto mask = json::parse(read(path("sel/mask.json")));
  EXPECT_EQ(mask["levels"][0].size(), 4u);
  EXPECT_EQ(mask["levels"][1].size(), 6u);
  const auto scores = json::parse(read(path("sel/scores.json")));
  EXPECT_EQ(scores["scores"].size(), 10u);
  std::string masked, plain;
  const int rm = run("align " + a + " " + b + conv + " --mask " + path("sel/mask.json"), &masked);
  const int rp = run("align " + a + " " + b + conv, &plain);
  EXPECT_EQ(rm, rp);
  EXPECT_EQ(json::parse(masked)["result"], json::parse(plain)["result"]);

  ASSERT_EQ(run("select --merge " + path("sel/scores.json") + " " + path("sel/scores.json") + " --fraction 0.5 --out " +
                path("merged")), 0);
  EXPECT_EQ(json::parse(read(path("merged/mask.json")))["levels"][1].size(), 3u);
}

TEST_F(Cli, CostSurface) {
  const auto a = scene("a.png", Vec3::Zero(), 64);
  ASSERT_EQ(run("costsurf " + a + " " + a + " --level 1 --axis0 1,-0.1,0.1,0.05 --axis1 0,-0.1,0.1,0.05 --out " + path("cs")), 0);
  const auto csv = read(path("cs/cost_surface.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "p0,p1,cost,valid_fraction");
  const auto meta = json::parse(read(path("cs/cost_surface.json")));
  EXPECT_EQ(meta["cells"], 25);
  EXPECT_EQ(meta["minimum"]["p0"], 0.0);
  EXPECT_EQ(meta["minimum"]["cost"], 0.0);
}

TEST_F(Cli, MosaicOutputs) {
  std::string frames;
  for (int i = 0; i < 6; ++i) frames += " " + scene("f" + std::to_string(i) + ".png", Vec3(0.0, 0.01 * i, 0.0), 64);
  ASSERT_EQ(run("mosaic" + frames + " --pano-width 256 --levels 4 --out " + path("m")), 0);
  const auto pano = read_image(path("m/panorama.png"));
  EXPECT_EQ(pano.width(), 256u);
  EXPECT_EQ(pano.height(), 128u);
  std::istringstream traj(read(path("m/trajectory.jsonl")));
  std::string line;
  int n = 0;
  while (std::getline(traj, line)) {
    const auto j = json::parse(line);
    EXPECT_EQ(j["frame"], n);
    EXPECT_EQ(j["status"], "tracking");
    ++n;
  }
  EXPECT_EQ(n, 6);
}

TEST_F(Cli, ThreadCountDoesNotChangeOutputs) {
  const auto a = scene("a.png", Vec3::Zero(), 64);
  const auto b = scene("b.png", Vec3(0.02, 0.01, 0.0), 64);
  ASSERT_EQ(run("align " + a + " " + b + " --threads 1 --out " + path("t1.json")), 0);
  ASSERT_EQ(run("align " + a + " " + b + " --threads 8 --out " + path("t8.json")), 0);
  EXPECT_EQ(read(path("t1.json")), read(path("t8.json")));
}

}  // namespace
}  // namespace semtex
