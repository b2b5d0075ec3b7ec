#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "tbsfm/bundle_adjustment.hpp"
#include "tbsfm/evaluation.hpp"
#include "tbsfm/merging.hpp"
#include "tbsfm/registration.hpp"
#include "tbsfm/segmentation.hpp"
#include "tbsfm/simulator.hpp"

namespace tbsfm {

struct PipelineOptions {
  RansacParams ransac;
  LinkageOptions linkage;
  SegmentationConfig segmentation;
  MergeOptions merge;
  BAOptions ba;
  int threads = 1;
};

// A stage could not produce its result; carries the stage name for reporting.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage_name, const std::string& what)
      : std::runtime_error(what), stage(std::move(stage_name)) {}
  const std::string stage;
};

// Every stage reads its inputs from files and writes its outputs to files, so
// running `pipeline` and chaining the individual subcommands produce
// byte-identical results.

void stage_simulate(const std::filesystem::path& config_path,
                    const std::filesystem::path& out_dir,
                    std::ostream& log);

void stage_register(const std::filesystem::path& scene_dir,
                    const std::filesystem::path& out_dir,
                    const RansacParams& params,
                    int threads,
                    std::ostream& log);

// Writes groups.txt and tracks.txt.
void stage_group(const std::filesystem::path& scene_dir,
                 const std::filesystem::path& registrations_dir,
                 const std::filesystem::path& out_dir,
                 const LinkageOptions& options,
                 double tau,
                 std::ostream& log);

// Writes labels.txt and global_groups.txt; nearest-neighbor propagation runs
// later, in the merge stage, once coordinates share a frame.
void stage_segment(const std::filesystem::path& scene_dir,
                   const std::filesystem::path& groups_dir,
                   const std::filesystem::path& tracks_path,
                   const std::filesystem::path& out_dir,
                   const SegmentationConfig& config,
                   const LinkageOptions& linkage,
                   std::ostream& log);

void stage_merge(const std::filesystem::path& scene_dir,
                 const std::filesystem::path& segment_dir,
                 const std::filesystem::path& out_dir,
                 const std::optional<std::filesystem::path>& registrations_dir,
                 const MergeOptions& options,
                 std::ostream& log);

void stage_ba(const std::filesystem::path& merged_dir,
              const std::filesystem::path& out_dir,
              const BAOptions& options,
              std::ostream& log);

void stage_evaluate(const std::filesystem::path& result_dir,
                    const std::filesystem::path& ground_truth_path,
                    const std::filesystem::path& out_json,
                    std::ostream& log);

void stage_export_ply(const std::filesystem::path& result_dir,
                      const std::filesystem::path& out_ply,
                      std::ostream& log);

// Registration through bundle adjustment in order, every intermediate dump
// kept under out_dir; evaluates automatically when the scene carries ground
// truth.
void run_pipeline(const std::filesystem::path& scene_dir,
                  const std::filesystem::path& out_dir,
                  const PipelineOptions& options,
                  std::ostream& log);

}  // namespace tbsfm
