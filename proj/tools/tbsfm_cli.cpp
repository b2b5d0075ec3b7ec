#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "tbsfm/pipeline.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitDataError = 2;
constexpr int kExitStageFailure = 3;

int default_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-body structure from motion for semidynamic scenes"};
  app.require_subcommand(1);
  // Global options may also appear after the subcommand name.
  app.fallthrough();

  uint64_t seed = 0;
  int threads = default_threads();
  app.add_option("--seed", seed, "global random seed")->capture_default_str();
  app.add_option("--threads", threads, "worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  tbsfm::PipelineOptions options;

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic scene with ground truth");
  std::string sim_config, sim_out;
  simulate->add_option("--config", sim_config, "JSON config file")->required();
  simulate->add_option("--out", sim_out, "output scene directory")->required();

  // register
  auto* reg = app.add_subcommand("register", "register every camera toward every other take");
  std::string reg_scene, reg_out;
  reg->add_option("--scene", reg_scene, "scene directory")->required();
  reg->add_option("--out", reg_out, "output directory")->required();
  reg->add_option("--tau", options.ransac.tau, "inlier threshold in pixels")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  reg->add_option("--max-iterations", options.ransac.max_iterations, "RANSAC iteration cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  reg->add_option("--confidence", options.ransac.confidence, "RANSAC confidence")
      ->check(CLI::Range(1e-6, 1.0 - 1e-9))
      ->capture_default_str();
  reg->add_option("--min-inliers", options.ransac.min_inliers, "minimum consensus size")
      ->check(CLI::Range(4, 1 << 30))
      ->capture_default_str();
  reg->add_option("--max-models", options.ransac.max_models, "sequential pose cap per camera")
      ->check(CLI::Range(2, 64))
      ->capture_default_str();

  // group
  auto* group = app.add_subcommand("group", "cluster pose observations per take; builds tracks");
  std::string group_scene, group_reg, group_out;
  group->add_option("--scene", group_scene, "scene directory")->required();
  group->add_option("--registrations", group_reg, "registration dump (file or directory)")
      ->required();
  group->add_option("--out", group_out, "output directory")->required();
  group->add_flag("--motion-criterion", options.linkage.motion_criterion,
                  "enable the motion-based admissibility filter");
  group->add_option("--tau", options.ransac.tau, "link verification threshold in pixels")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  // segment
  auto* segment = app.add_subcommand("segment", "merge take groups globally and label tracks");
  std::string seg_scene, seg_groups, seg_tracks, seg_out;
  segment->add_option("--scene", seg_scene, "scene directory")->required();
  segment->add_option("--groups", seg_groups, "grouping output (file or directory)")->required();
  segment->add_option("--tracks", seg_tracks, "tracks dump (file or directory)")->required();
  segment->add_option("--out", seg_out, "output directory")->required();
  segment->add_option("--knn", options.segmentation.knn, "neighbors for label propagation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  segment->add_flag("--swap", options.segmentation.swap,
                    "exchange the background/foreground roles of the two groups");

  // merge
  auto* merge = app.add_subcommand("merge", "move all takes into the reference frame");
  std::string merge_scene, merge_labels, merge_out, merge_reg;
  merge->add_option("--scene", merge_scene, "scene directory")->required();
  merge->add_option("--labels", merge_labels, "segmentation output directory")->required();
  merge->add_option("--out", merge_out, "output directory")->required();
  merge->add_option("--registrations", merge_reg,
                    "registration dump; enables the camera-pair cross-check and fallback");
  merge->add_option("--tau", options.ransac.tau, "link verification threshold in pixels")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  // ba
  auto* ba = app.add_subcommand("ba", "bundle adjustment with the shared-motion constraint");
  std::string ba_merged, ba_out;
  ba->add_option("--merged", ba_merged, "merged model directory")->required();
  ba->add_option("--out", ba_out, "output directory")->required();
  ba->add_flag("--robust", options.ba.robust, "Huber loss on the residuals");
  ba->add_option("--max-iters", options.ba.max_iterations, "iteration cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "run all stages in order");
  std::string pipe_scene, pipe_out;
  pipeline->add_option("--scene", pipe_scene, "scene directory")->required();
  pipeline->add_option("--out", pipe_out, "output directory")->required();
  pipeline->add_option("--tau", options.ransac.tau, "inlier threshold in pixels")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pipeline->add_option("--knn", options.segmentation.knn, "neighbors for label propagation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pipeline->add_flag("--swap", options.segmentation.swap,
                     "exchange the background/foreground roles of the two groups");
  pipeline->add_flag("--motion-criterion", options.linkage.motion_criterion,
                     "enable the motion-based admissibility filter");
  pipeline->add_flag("--robust", options.ba.robust, "Huber loss in bundle adjustment");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score a result against ground truth");
  std::string eval_result, eval_gt, eval_out = "report.json";
  evaluate->add_option("--result", eval_result, "merged or ba output directory")->required();
  evaluate->add_option("--ground-truth", eval_gt, "ground_truth.txt or the scene directory")
      ->required();
  evaluate->add_option("--out", eval_out, "report JSON path")->capture_default_str();

  // export-ply
  auto* export_ply = app.add_subcommand("export-ply", "write the labeled model as colored PLY");
  std::string ply_result, ply_out = "model.ply";
  export_ply->add_option("--result", ply_result, "merged or ba output directory")->required();
  export_ply->add_option("--out", ply_out, "PLY path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& error) {
    if (error.get_exit_code() == 0) {
      return app.exit(error);  // --help
    }
    app.exit(error);
    return kExitUsage;
  }

  options.ransac.seed = seed;
  options.threads = threads;
  options.merge.tau = options.ransac.tau;  // link verification shares the inlier threshold
  std::ostream& log = std::cout;
  log << "config: seed=" << seed << " threads=" << threads << " tau=" << options.ransac.tau
      << " min_inliers=" << options.ransac.min_inliers << " knn=" << options.segmentation.knn
      << (options.segmentation.swap ? " swap" : "")
      << (options.linkage.motion_criterion ? " motion-criterion" : "")
      << (options.ba.robust ? " robust" : "") << "\n";

  try {
    if (simulate->parsed()) {
      tbsfm::stage_simulate(sim_config, sim_out, log);
    } else if (reg->parsed()) {
      tbsfm::stage_register(reg_scene, reg_out, options.ransac, options.threads, log);
    } else if (group->parsed()) {
      tbsfm::stage_group(group_scene, group_reg, group_out, options.linkage, options.ransac.tau,
                         log);
    } else if (segment->parsed()) {
      tbsfm::stage_segment(seg_scene, seg_groups, seg_tracks, seg_out, options.segmentation,
                           options.linkage, log);
    } else if (merge->parsed()) {
      std::optional<std::filesystem::path> reg_path;
      if (!merge_reg.empty()) {
        reg_path = merge_reg;
      }
      tbsfm::stage_merge(merge_scene, merge_labels, merge_out, reg_path, options.merge, log);
    } else if (ba->parsed()) {
      tbsfm::stage_ba(ba_merged, ba_out, options.ba, log);
    } else if (pipeline->parsed()) {
      tbsfm::run_pipeline(pipe_scene, pipe_out, options, log);
    } else if (evaluate->parsed()) {
      tbsfm::stage_evaluate(eval_result, eval_gt, eval_out, log);
    } else if (export_ply->parsed()) {
      tbsfm::stage_export_ply(ply_result, ply_out, log);
    }
  } catch (const tbsfm::StageError& error) {
    std::cerr << "stage '" << error.stage << "' failed: " << error.what() << "\n";
    return kExitStageFailure;
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitDataError;
  }
  return 0;
}
