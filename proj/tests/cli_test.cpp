#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "test_support.hpp"

namespace tbsfm {
namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
  const std::string command = std::string(TBSFM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WEXITSTATUS(status);
}

void write_config(const fs::path& path, uint64_t seed) {
  std::ofstream out(path);
  out << R"({"seed": )" << seed
      << R"(, "takes": 2, "background_points": 120, "foreground_points": 60,
          "cameras_per_take": 5, "visibility_fraction": 0.95})";
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = test::make_temp_dir("cli");
    write_config(root_ / "config.json", 11);
    ASSERT_EQ(run_cli("simulate --config " + (root_ / "config.json").string() + " --out " +
                      (root_ / "scene").string()),
              0);
  }
  fs::path root_;
};

TEST_F(CliTest, MissingSceneDirectoryExitsWithDataError) {
  EXPECT_EQ(run_cli("pipeline --scene " + (root_ / "nonexistent").string() + " --out " +
                    (root_ / "out").string()),
            2);
}

TEST_F(CliTest, InvalidKnnExitsWithUsageError) {
  EXPECT_EQ(run_cli("segment --scene " + (root_ / "scene").string() +
                    " --groups g --tracks t --out o --knn 0"),
            1);
}

TEST_F(CliTest, UnknownSubcommandExitsWithUsageError) {
  EXPECT_EQ(run_cli("frobnicate"), 1);
}

TEST_F(CliTest, PipelineWritesReport) {
  ASSERT_EQ(run_cli("--seed 5 pipeline --scene " + (root_ / "scene").string() + " --out " +
                    (root_ / "run").string()),
            0);
  EXPECT_TRUE(fs::exists(root_ / "run" / "report.json"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "registrations.txt"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "grouping" / "groups.txt"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "grouping" / "tracks.txt"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "segmentation" / "labels.txt"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "merged" / "merged" / "points.txt"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "ba" / "ba_report.txt"));
}

TEST_F(CliTest, PipelineMatchesChainedSubcommands) {
  const std::string scene = (root_ / "scene").string();
  ASSERT_EQ(run_cli("--seed 5 pipeline --scene " + scene + " --out " +
                    (root_ / "pipeline").string()),
            0);

  const fs::path chained = root_ / "chained";
  fs::create_directories(chained);
  ASSERT_EQ(run_cli("--seed 5 register --scene " + scene + " --out " + chained.string()), 0);
  ASSERT_EQ(run_cli("group --scene " + scene + " --registrations " + chained.string() +
                    " --out " + (chained / "grouping").string()),
            0);
  ASSERT_EQ(run_cli("segment --scene " + scene + " --groups " +
                    (chained / "grouping").string() + " --tracks " +
                    (chained / "grouping").string() + " --out " +
                    (chained / "segmentation").string()),
            0);
  ASSERT_EQ(run_cli("merge --scene " + scene + " --labels " +
                    (chained / "segmentation").string() + " --out " +
                    (chained / "merged").string() + " --registrations " + chained.string()),
            0);
  ASSERT_EQ(run_cli("ba --merged " + (chained / "merged").string() + " --out " +
                    (chained / "ba").string()),
            0);
  ASSERT_EQ(run_cli("evaluate --result " + (chained / "ba").string() + " --ground-truth " +
                    scene + " --out " + (chained / "report.json").string()),
            0);

  // Stage-for-stage byte identity with the pipeline run.
  for (const std::string rel :
       {"registrations.txt", "grouping/groups.txt", "grouping/tracks.txt",
        "segmentation/labels.txt", "segmentation/global_groups.txt",
        "merged/merged/points.txt", "merged/merged/images.txt", "merged/motions.txt",
        "merged/labels.txt", "ba/merged/points.txt", "ba/merged/images.txt",
        "ba/motions.txt", "ba/ba_report.txt", "report.json"}) {
    EXPECT_EQ(test::read_file(root_ / "pipeline" / rel), test::read_file(chained / rel))
        << rel << " differs";
  }
}

TEST_F(CliTest, ExportPlyWritesModel) {
  ASSERT_EQ(run_cli("--seed 5 pipeline --scene " + (root_ / "scene").string() + " --out " +
                    (root_ / "run2").string()),
            0);
  ASSERT_EQ(run_cli("export-ply --result " + (root_ / "run2" / "ba").string() + " --out " +
                    (root_ / "model.ply").string()),
            0);
  const std::string content = test::read_file(root_ / "model.ply");
  EXPECT_NE(content.find("ply"), std::string::npos);
  EXPECT_NE(content.find("end_header"), std::string::npos);
}

TEST_F(CliTest, DegenerateSceneTerminatesCleanly) {
  // No motion between takes: grouping cannot find pose pairs anywhere; the
  // pipeline stops at segmentation with a degenerate-grouping report.
  std::ofstream out(root_ / "static.json");
  out << R"({"seed": 3, "takes": 2, "background_points": 120, "foreground_points": 60,
            "cameras_per_take": 5, "visibility_fraction": 0.95,
            "foreground_rotation_magnitude": 0.0, "foreground_translation_magnitude": 0.0})";
  out.close();
  ASSERT_EQ(run_cli("simulate --config " + (root_ / "static.json").string() + " --out " +
                    (root_ / "static_scene").string()),
            0);
  EXPECT_EQ(run_cli("--seed 5 pipeline --scene " + (root_ / "static_scene").string() +
                    " --out " + (root_ / "static_run").string()),
            3);
  EXPECT_TRUE(fs::exists(root_ / "static_run" / "segmentation" / "degenerate_report.txt"));
}

}  // namespace
}  // namespace tbsfm
