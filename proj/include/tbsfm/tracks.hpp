#pragma once

#include <filesystem>
#include <map>
#include <utility>
#include <vector>

#include "tbsfm/registration.hpp"
#include "tbsfm/scene.hpp"

namespace tbsfm {

// Graph over per-take points. Edges connect points of different takes that a
// verified observation links together.
struct TrackGraph {
  std::vector<std::pair<int, int>> vertices;       // (take_id, point_id), sorted
  std::vector<std::pair<size_t, size_t>> edges;    // indices into vertices

  size_t vertex_index(int take_id, int point_id) const;  // throws on unknown vertex
};

// Points of different takes identified as the same physical point.
struct Track {
  int track_id = 0;
  std::vector<std::pair<int, int>> members;  // (take_id, point_id), sorted
};

// A link of an observation is verified when the linked point actually projects
// onto that observation: for the image's own take through its stored pose, and
// for other takes through a sequentially registered pose claiming the
// observation as an inlier. Unverified links (mismatches) produce no edges.
bool link_verified(const MultiTakeScene& scene,
                   const Registration& registration,
                   const TakeModel& source_take,
                   const TakeImage& image,
                   int obs_index,
                   const std::pair<int, int>& link,
                   double tau);

TrackGraph build_graph(const MultiTakeScene& scene,
                       const Registration& registration,
                       double tau = 4.0);

// Connected components via union-find; track ids follow the lexicographically
// smallest member of each component.
std::vector<Track> connected_components(const TrackGraph& graph);

// (take_id, point_id) -> track_id lookup.
std::map<std::pair<int, int>, int> track_membership(const std::vector<Track>& tracks);

void save_tracks(const std::vector<Track>& tracks, const std::filesystem::path& path);
std::vector<Track> load_tracks(const std::filesystem::path& path);

}  // namespace tbsfm
