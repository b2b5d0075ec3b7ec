#include "tbsfm/tracks.hpp"

#include <algorithm>
#include <numeric>

#include "tbsfm/text_io.hpp"

namespace tbsfm {
namespace {

class UnionFind {
 public:
  explicit UnionFind(size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), size_t{0});
  }

  size_t find(size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(size_t a, size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) {
      return;
    }
    if (rank_[a] < rank_[b]) {
      std::swap(a, b);
    }
    parent_[b] = a;
    if (rank_[a] == rank_[b]) {
      ++rank_[a];
    }
  }

 private:
  std::vector<size_t> parent_;
  std::vector<size_t> rank_;
};

}  // namespace

size_t TrackGraph::vertex_index(int take_id, int point_id) const {
  const std::pair<int, int> key{take_id, point_id};
  const auto it = std::lower_bound(vertices.begin(), vertices.end(), key);
  if (it == vertices.end() || *it != key) {
    throw std::out_of_range("unknown vertex (" + std::to_string(take_id) + ", " +
                            std::to_string(point_id) + ")");
  }
  return static_cast<size_t>(it - vertices.begin());
}

bool link_verified(const MultiTakeScene& scene,
                   const Registration& registration,
                   const TakeModel& source_take,
                   const TakeImage& image,
                   int obs_index,
                   const std::pair<int, int>& link,
                   double tau) {
  const auto& [link_take, link_point] = link;
  if (link_take == source_take.take_id) {
    // The take's own reconstruction: the stored pose must explain the feature.
    const auto it = source_take.points.find(link_point);
    if (it == source_take.points.end()) {
      return false;
    }
    const auto reproj = try_project(source_take.pose(image), it->second);
    const Observation& obs = image.observations[static_cast<size_t>(obs_index)];
    return reproj.has_value() && (*reproj - obs.pixel).norm() < tau;
  }
  (void)scene;
  const std::vector<RegisteredPose>* poses = registration.find(image.image_id, link_take);
  if (poses == nullptr) {
    return false;
  }
  for (const RegisteredPose& pose : *poses) {
    if (pose.has_inlier(link_point, obs_index)) {
      return true;
    }
  }
  return false;
}

TrackGraph build_graph(const MultiTakeScene& scene,
                       const Registration& registration,
                       double tau) {
  TrackGraph graph;
  for (const TakeModel& take : scene.takes) {
    for (const auto& [point_id, pos] : take.points) {
      graph.vertices.emplace_back(take.take_id, point_id);
    }
  }
  std::sort(graph.vertices.begin(), graph.vertices.end());

  for (const TakeModel& take : scene.takes) {
    for (const TakeImage& image : take.images) {
      for (size_t o = 0; o < image.observations.size(); ++o) {
        const Observation& obs = image.observations[o];
        if (obs.links.size() < 2) {
          continue;
        }
        std::vector<size_t> verified;
        for (const auto& link : obs.links) {
          if (link_verified(scene, registration, take, image, static_cast<int>(o), link, tau)) {
            verified.push_back(graph.vertex_index(link.first, link.second));
          }
        }
        // Take ids are unique within the links, so all pairs cross takes.
        for (size_t a = 0; a < verified.size(); ++a) {
          for (size_t b = a + 1; b < verified.size(); ++b) {
            graph.edges.emplace_back(std::min(verified[a], verified[b]),
                                     std::max(verified[a], verified[b]));
          }
        }
      }
    }
  }
  std::sort(graph.edges.begin(), graph.edges.end());
  graph.edges.erase(std::unique(graph.edges.begin(), graph.edges.end()), graph.edges.end());
  return graph;
}

std::vector<Track> connected_components(const TrackGraph& graph) {
  UnionFind uf(graph.vertices.size());
  for (const auto& [a, b] : graph.edges) {
    uf.unite(a, b);
  }

  std::map<size_t, std::vector<std::pair<int, int>>> components;
  for (size_t i = 0; i < graph.vertices.size(); ++i) {
    components[uf.find(i)].push_back(graph.vertices[i]);
  }

  std::vector<Track> tracks;
  tracks.reserve(components.size());
  for (auto& [root, members] : components) {
    std::sort(members.begin(), members.end());
    tracks.push_back({0, std::move(members)});
  }
  // Ids follow the smallest member; vertices are sorted, so the smallest
  // member of a component determines a total order.
  std::sort(tracks.begin(), tracks.end(),
            [](const Track& a, const Track& b) { return a.members.front() < b.members.front(); });
  for (size_t i = 0; i < tracks.size(); ++i) {
    tracks[i].track_id = static_cast<int>(i);
  }
  return tracks;
}

std::map<std::pair<int, int>, int> track_membership(const std::vector<Track>& tracks) {
  std::map<std::pair<int, int>, int> membership;
  for (const Track& track : tracks) {
    for (const auto& member : track.members) {
      membership[member] = track.track_id;
    }
  }
  return membership;
}

void save_tracks(const std::vector<Track>& tracks, const std::filesystem::path& path) {
  io::LineWriter out(path);
  for (const Track& track : tracks) {
    out << "TRK" << track.track_id << static_cast<int>(track.members.size());
    for (const auto& [take_id, point_id] : track.members) {
      out << take_id << point_id;
    }
    out.end_line();
  }
}

std::vector<Track> load_tracks(const std::filesystem::path& path) {
  std::vector<Track> tracks;
  io::TokenFile file(path);
  while (file.next_line()) {
    if (file.tag() != "TRK") {
      file.fail("expected TRK line");
    }
    file.expect_min_size(3);
    Track track;
    track.track_id = file.int_at(1);
    const int n = file.int_at(2);
    file.expect_size(3 + 2 * static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      track.members.emplace_back(file.int_at(3 + 2 * static_cast<size_t>(i)),
                                 file.int_at(4 + 2 * static_cast<size_t>(i)));
    }
    tracks.push_back(std::move(track));
  }
  return tracks;
}

}  // namespace tbsfm
