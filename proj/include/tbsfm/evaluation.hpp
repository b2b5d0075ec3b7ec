#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "tbsfm/merging.hpp"

namespace tbsfm {

struct SegmentationScore {
  double accuracy = 0.0;  // max over the two label permutations, non-U points
  bool swapped = false;
  double coverage = 0.0;  // fraction of points not labeled U
};

// Per-take-point labels induced by the track labels.
std::map<std::pair<int, int>, Label> per_point_labels(const std::vector<Track>& tracks,
                                                      const std::map<int, Label>& track_labels);

// Swap-invariant: the metric is identical after exchanging B and F.
SegmentationScore segmentation_accuracy(const std::map<std::pair<int, int>, Label>& estimated,
                                        const GroundTruth& gt);

struct MotionError {
  double rotation_rad = 0.0;
  double translation_relative = 0.0;  // |delta a| / scene diameter
};

// Compares estimated per-take motions against the ground truth transported
// into the reference frame by the reference take's gauge similarity. With
// swapped labels the estimated motions invert, which the comparison undoes.
std::map<int, MotionError> motion_error(const LabeledScene& merged,
                                        const GroundTruth& gt,
                                        bool swapped);

struct Report {
  int points_background = 0;
  int points_foreground = 0;
  int points_unknown = 0;
  double median_reproj_px = 0.0;
  int cameras = 0;
  std::optional<SegmentationScore> segmentation;
  std::map<int, MotionError> motion_errors;

  std::string to_json() const;
  std::string to_text() const;
};

// Track counts, median reprojection over labeled observations, and, when
// ground truth is available, segmentation and motion metrics.
Report make_report(const LabeledScene& merged,
                   const std::map<int, Label>& all_track_labels,
                   const std::vector<Track>* tracks,
                   const GroundTruth* gt);

void save_report(const Report& report, const std::filesystem::path& json_path);

// ASCII PLY with foreground green, background red, unknown gray.
void export_ply(const LabeledScene& merged, const std::filesystem::path& path);

}  // namespace tbsfm
