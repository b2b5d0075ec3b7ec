#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tbsfm/grouping.hpp"
#include "tbsfm/tracks.hpp"

namespace tbsfm {

// A take's group pair with points replaced by tracks.
struct LiftedGroupPair {
  int take_id = 0;
  std::vector<int> tracks1;  // sorted track ids
  std::vector<int> tracks2;
  int support = 0;
};

LiftedGroupPair lift_to_tracks(const TakeGroupPair& group,
                               const std::map<std::pair<int, int>, int>& membership);

// Global two-way partition of tracks, grown greedily from the reference take.
struct GlobalGroups {
  int reference_take = 0;
  std::vector<int> group1;       // sorted track ids
  std::vector<int> group2;
  std::vector<int> merge_order;  // takes in merge order, reference first
  std::vector<int> unmerged_takes;
};

GlobalGroups merge_global(const std::vector<LiftedGroupPair>& pairs,
                          const LinkageOptions& options);

// Group 1 labels background, group 2 foreground, everything else unknown.
// With swap set the roles of the two groups are exchanged.
std::map<int, Label> label_points(const GlobalGroups& groups,
                                  const std::vector<Track>& tracks,
                                  bool swap = false);

// One simultaneous pass of unanimity k-NN over the merged coordinates:
// an unknown point adopts a label only when all k nearest labeled points
// agree. Returns the number of labels assigned; empty optional when there are
// fewer than k labeled points (propagation skipped).
std::optional<int> knn_propagate(std::map<int, Label>& labels,
                                 const std::map<int, Vec3>& positions,
                                 int k);

struct SegmentationConfig {
  int knn = 10;
  bool swap = false;
};

void save_labels(const std::map<int, Label>& labels, const std::filesystem::path& path);
std::map<int, Label> load_labels(const std::filesystem::path& path);

void save_global_groups(const GlobalGroups& groups, const SegmentationConfig& config,
                        const std::filesystem::path& path);
std::pair<GlobalGroups, SegmentationConfig> load_global_groups(const std::filesystem::path& path);

}  // namespace tbsfm
