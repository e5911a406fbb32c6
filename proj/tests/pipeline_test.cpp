#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support.hpp"

#ifndef AQE_CLI
#define AQE_CLI "aqe"
#endif

namespace fs = std::filesystem;
using testing_support::slurp;
using testing_support::TempDir;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

const char* kFast = "-s epochs=3 -s transfer_epochs=3 -s samples_per_category=300 -s hidden1=16 -s hidden2=8 ";

Run cli(const fs::path& dir, const std::string& args) {
  const auto o = dir / "stdout.txt", e = dir / "stderr.txt";
  const std::string cmd = std::string(AQE_CLI) + " " + args + " >" + o.string() + " 2>" + e.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("pipeline");
    const auto& d = dir_->path();
    world_ = (d / "world").string();
    ASSERT_EQ(cli(d, "synth --seed 3 --hours 48 --stations 20 --sparse-stations 5 --sparse-hours 24 -o " + world_).code, 0);
  }
  static void TearDownTestSuite() { delete dir_; }

  static std::string base() { return std::string("-d ") + world_ + " " + kFast; }

  static TempDir* dir_;
  static std::string world_;
};
TempDir* Pipeline::dir_ = nullptr;
std::string Pipeline::world_;

}  // namespace

TEST_F(Pipeline, WorldHasEveryInput) {
  for (const char* f : {"regions.csv", "stations.csv", "measurements.csv", "roads.geojson", "traffic.csv",
                        "land_cover.csv", "power_plants.csv"})
    EXPECT_TRUE(fs::exists(fs::path(world_) / f)) << f;
  EXPECT_TRUE(fs::is_directory(fs::path(world_) / "grids"));
}

TEST_F(Pipeline, RerunsAreByteIdentical) {
  TempDir t("rerun");
  const auto& d = t.path();
  for (const char* tag : {"a", "b"}) {
    const std::string ds = (d / ("ds_" + std::string(tag))).string();
    const std::string model = (d / ("m_" + std::string(tag) + ".bin")).string();
    const std::string rep = (d / ("r_" + std::string(tag) + ".csv")).string();
    auto r = cli(d, base() + "build-dataset -r metro -o " + ds);
    ASSERT_EQ(r.code, 0) << r.err;
    r = cli(d, base() + "train --dataset " + ds + " -o " + model);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("path=transfer"), std::string::npos) << r.out;
    r = cli(d, base() + "eval --dataset " + ds + " -m " + model + " -o " + rep);
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"manifest.csv", "train.csv", "eval.csv", "global.csv", "dataset.txt"})
    EXPECT_EQ(slurp(d / "ds_a" / f), slurp(d / "ds_b" / f)) << f;
  EXPECT_FALSE(slurp(d / "ds_a" / "train.csv").empty());
  EXPECT_EQ(slurp(d / "m_a.bin"), slurp(d / "m_b.bin"));
  EXPECT_EQ(slurp(d / "m_a.bin.global"), slurp(d / "m_b.bin.global"));
  EXPECT_EQ(slurp(d / "r_a.csv"), slurp(d / "r_b.csv"));
  EXPECT_EQ(slurp(d / "r_a.txt"), slurp(d / "r_b.txt"));
  EXPECT_EQ(slurp(d / "r_a.csv").rfind("region,pollutant,n,skipped", 0), 0u);
}

TEST_F(Pipeline, DirectTrainingAboveThreshold) {
  TempDir t("direct");
  const auto& d = t.path();
  const std::string ds = (d / "ds").string();
  ASSERT_EQ(cli(d, base() + "-s transfer_threshold=0 build-dataset -r metro -o " + ds).code, 0);
  EXPECT_FALSE(fs::exists(d / "ds" / "global.csv"));
  const auto r = cli(d, base() + "-s transfer_threshold=0 train --dataset " + ds + " -o " + (d / "m.bin").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("path=direct"), std::string::npos);
  EXPECT_TRUE(fs::exists(d / "m.bin.trace.csv"));
}

TEST_F(Pipeline, MapRoutePdp) {
  TempDir t("apps");
  const auto& d = t.path();
  const std::string ds = (d / "ds").string(), model = (d / "m.bin").string();
  ASSERT_EQ(cli(d, base() + "build-dataset -r metro -o " + ds).code, 0);
  ASSERT_EQ(cli(d, base() + "train --dataset " + ds + " -o " + model).code, 0);

  auto r = cli(d, base() + "-s cell_m=500 map -m " + model + " -r metro -t 2018-06-02T10:20Z --bbox 48.80 2.30 48.85 2.36 -o " +
                      (d / "map.csv").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("time=2018-06-02T10:00Z"), std::string::npos) << r.out;
  const auto map = slurp(d / "map.csv");
  EXPECT_EQ(map.rfind("lat,lon,no2,o3,pm25,pm10,paqi\n", 0), 0u);
  EXPECT_GT(std::count(map.begin(), map.end(), '\n'), 50);

  r = cli(d, base() + "route -m " + model + " -r metro --from 48.80,2.30 --to 48.90,2.40 -o " + (d / "route.json").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto gj = nlohmann::json::parse(slurp(d / "route.json"));
  EXPECT_EQ(gj["type"], "FeatureCollection");
  const auto& f = gj["features"];
  ASSERT_EQ(f.size(), 2u);
  EXPECT_LE(f[1]["properties"]["exposure"].get<double>(), f[0]["properties"]["exposure"].get<double>() * (1 + 1e-12));
  EXPECT_GE(f[1]["properties"]["length_km"].get<double>(), f[0]["properties"]["length_km"].get<double>() * (1 - 1e-12));

  r = cli(d, base() + "pdp --dataset " + ds + " -m " + model + " -f Roads_0.1 -o " + (d / "pdp.csv").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pdp = slurp(d / "pdp.csv");
  EXPECT_EQ(std::count(pdp.begin(), pdp.end(), '\n'), 21);
}

TEST_F(Pipeline, ErrorsCarryKindAndExitCode) {
  TempDir t("errors");
  const auto& d = t.path();
  auto r = cli(d, "train");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error kind=usage"), std::string::npos) << r.err;

  r = cli(d, base() + "build-dataset -r atlantis -o " + (d / "x").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error kind=not_found"), std::string::npos) << r.err;

  r = cli(d, "-d " + (d / "nowhere").string() + " build-dataset -r metro -o " + (d / "x").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error kind=not_found"), std::string::npos) << r.err;

  r = cli(d, base() + "-s colour=blue build-dataset -r metro -o " + (d / "x").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error kind=invalid_parameter"), std::string::npos) << r.err;

  std::ofstream(d / "bad.bin") << "not a model";
  r = cli(d, base() + "map -m " + (d / "bad.bin").string() + " -r metro -o " + (d / "m.csv").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error kind=format"), std::string::npos) << r.err;
}
