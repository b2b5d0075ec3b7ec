#include "tbsfm/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tbsfm/text_io.hpp"

namespace tbsfm {
namespace {

int intersection_size(const std::vector<int>& a, const std::vector<int>& b) {
  int count = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++count;
      ++ia;
      ++ib;
    }
  }
  return count;
}

std::vector<int> set_union(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

double threshold(const LinkageOptions& options, const std::vector<int>& a,
                 const std::vector<int>& b) {
  return options.threshold_fraction * static_cast<double>(std::min(a.size(), b.size()));
}

}  // namespace

LiftedGroupPair lift_to_tracks(const TakeGroupPair& group,
                               const std::map<std::pair<int, int>, int>& membership) {
  // Count how many member points each set claims per track; a track claimed by
  // both sets goes to the majority, ties drop it from both.
  std::map<int, std::pair<int, int>> claims;  // track -> (count in set1, count in set2)
  for (const int point_id : group.group1) {
    const auto it = membership.find({group.take_id, point_id});
    if (it != membership.end()) {
      ++claims[it->second].first;
    }
  }
  for (const int point_id : group.group2) {
    const auto it = membership.find({group.take_id, point_id});
    if (it != membership.end()) {
      ++claims[it->second].second;
    }
  }

  LiftedGroupPair lifted;
  lifted.take_id = group.take_id;
  lifted.support = group.support;
  for (const auto& [track_id, counts] : claims) {
    if (counts.first > counts.second) {
      lifted.tracks1.push_back(track_id);
    } else if (counts.second > counts.first) {
      lifted.tracks2.push_back(track_id);
    }
    // equal claims: dropped from both
  }
  return lifted;
}

GlobalGroups merge_global(const std::vector<LiftedGroupPair>& pairs,
                          const LinkageOptions& options) {
  if (pairs.empty()) {
    throw std::invalid_argument("merge_global needs at least one grouped take");
  }

  // Reference take: the pair merged from the most cameras.
  size_t reference = 0;
  for (size_t i = 1; i < pairs.size(); ++i) {
    const size_t size_i = pairs[i].tracks1.size() + pairs[i].tracks2.size();
    const size_t size_r = pairs[reference].tracks1.size() + pairs[reference].tracks2.size();
    if (pairs[i].support > pairs[reference].support ||
        (pairs[i].support == pairs[reference].support &&
         (size_i > size_r ||
          (size_i == size_r && pairs[i].take_id < pairs[reference].take_id)))) {
      reference = i;
    }
  }

  GlobalGroups groups;
  groups.reference_take = pairs[reference].take_id;
  groups.group1 = pairs[reference].tracks1;
  groups.group2 = pairs[reference].tracks2;
  groups.merge_order.push_back(groups.reference_take);

  std::vector<size_t> remaining;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (i != reference) {
      remaining.push_back(i);
    }
  }

  while (!remaining.empty()) {
    // Best admissible candidate against the current global pair under the
    // straight and crossed criteria.
    int best_value = 0;
    size_t best_pos = 0;
    bool best_crossed = false;
    size_t best_union = 0;
    int best_take = 0;
    bool found = false;
    for (size_t pos = 0; pos < remaining.size(); ++pos) {
      const LiftedGroupPair& p = pairs[remaining[pos]];
      const int s11 = intersection_size(groups.group1, p.tracks1);
      const int s22 = intersection_size(groups.group2, p.tracks2);
      const int s12 = intersection_size(groups.group1, p.tracks2);
      const int s21 = intersection_size(groups.group2, p.tracks1);

      const auto consider = [&](int value, bool crossed) {
        if (value <= 0) {
          return;
        }
        const size_t union_size =
            set_union(groups.group1, crossed ? p.tracks2 : p.tracks1).size() +
            set_union(groups.group2, crossed ? p.tracks1 : p.tracks2).size();
        if (!found || value > best_value ||
            (value == best_value &&
             (union_size > best_union ||
              (union_size == best_union && p.take_id < best_take)))) {
          found = true;
          best_value = value;
          best_pos = pos;
          best_crossed = crossed;
          best_union = union_size;
          best_take = p.take_id;
        }
      };

      if (s12 < threshold(options, groups.group1, p.tracks2) &&
          s21 < threshold(options, groups.group2, p.tracks1)) {
        consider(s11 + s22, false);
      }
      if (s11 < threshold(options, groups.group1, p.tracks1) &&
          s22 < threshold(options, groups.group2, p.tracks2)) {
        consider(s12 + s21, true);
      }
    }
    if (!found) {
      break;
    }

    const LiftedGroupPair& p = pairs[remaining[best_pos]];
    groups.group1 = set_union(groups.group1, best_crossed ? p.tracks2 : p.tracks1);
    groups.group2 = set_union(groups.group2, best_crossed ? p.tracks1 : p.tracks2);
    groups.merge_order.push_back(p.take_id);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best_pos));
  }

  for (const size_t pos : remaining) {
    groups.unmerged_takes.push_back(pairs[pos].take_id);
  }
  std::sort(groups.unmerged_takes.begin(), groups.unmerged_takes.end());
  return groups;
}

std::map<int, Label> label_points(const GlobalGroups& groups,
                                  const std::vector<Track>& tracks,
                                  bool swap) {
  std::map<int, Label> labels;
  for (const Track& track : tracks) {
    labels[track.track_id] = Label::kUnknown;
  }
  const Label first = swap ? Label::kForeground : Label::kBackground;
  const Label second = swap ? Label::kBackground : Label::kForeground;
  for (const int track_id : groups.group1) {
    labels[track_id] = first;
  }
  for (const int track_id : groups.group2) {
    labels[track_id] = second;
  }
  return labels;
}

std::optional<int> knn_propagate(std::map<int, Label>& labels,
                                 const std::map<int, Vec3>& positions,
                                 int k) {
  if (k < 1) {
    throw std::invalid_argument("k must be >= 1");
  }
  std::vector<std::pair<Vec3, Label>> labeled;
  for (const auto& [track_id, label] : labels) {
    if (label == Label::kUnknown) {
      continue;
    }
    const auto it = positions.find(track_id);
    if (it != positions.end()) {
      labeled.emplace_back(it->second, label);
    }
  }
  if (static_cast<int>(labeled.size()) < k) {
    return std::nullopt;
  }

  // Labels stay frozen during the pass; decisions are collected first.
  std::vector<std::pair<int, Label>> assignments;
  std::vector<std::pair<double, size_t>> distances(labeled.size());
  for (const auto& [track_id, label] : labels) {
    if (label != Label::kUnknown) {
      continue;
    }
    const auto it = positions.find(track_id);
    if (it == positions.end()) {
      continue;
    }
    for (size_t i = 0; i < labeled.size(); ++i) {
      distances[i] = {(labeled[i].first - it->second).squaredNorm(), i};
    }
    std::nth_element(distances.begin(), distances.begin() + (k - 1), distances.end());
    Label unanimous = labeled[distances[0].second].second;
    bool agree = true;
    for (int i = 0; i < k && agree; ++i) {
      agree = labeled[distances[static_cast<size_t>(i)].second].second == unanimous;
    }
    if (agree) {
      assignments.emplace_back(track_id, unanimous);
    }
  }
  for (const auto& [track_id, label] : assignments) {
    labels[track_id] = label;
  }
  return static_cast<int>(assignments.size());
}

void save_labels(const std::map<int, Label>& labels, const std::filesystem::path& path) {
  io::LineWriter out(path);
  for (const auto& [track_id, label] : labels) {
    out << "LBL" << track_id << std::string(1, label_code(label));
    out.end_line();
  }
}

std::map<int, Label> load_labels(const std::filesystem::path& path) {
  std::map<int, Label> labels;
  io::TokenFile file(path);
  while (file.next_line()) {
    if (file.tag() != "LBL") {
      file.fail("expected LBL line");
    }
    file.expect_size(3);
    const std::string& code = file.str_at(2);
    if (code.size() != 1) {
      file.fail("expected single-character label");
    }
    labels[file.int_at(1)] = label_from_code(code[0]);
  }
  return labels;
}

void save_global_groups(const GlobalGroups& groups, const SegmentationConfig& config,
                        const std::filesystem::path& path) {
  io::LineWriter out(path);
  out << "REF" << groups.reference_take;
  out.end_line();
  out << "KNN" << config.knn;
  out.end_line();
  out << "SWAP" << (config.swap ? 1 : 0);
  out.end_line();
  out << "ORDER" << static_cast<int>(groups.merge_order.size());
  for (const int take_id : groups.merge_order) {
    out << take_id;
  }
  out.end_line();
  out << "UNMERGED" << static_cast<int>(groups.unmerged_takes.size());
  for (const int take_id : groups.unmerged_takes) {
    out << take_id;
  }
  out.end_line();
  for (int index = 1; index <= 2; ++index) {
    const std::vector<int>& set = index == 1 ? groups.group1 : groups.group2;
    out << "GGRP" << index << static_cast<int>(set.size());
    for (const int id : set) {
      out << id;
    }
    out.end_line();
  }
}

std::pair<GlobalGroups, SegmentationConfig> load_global_groups(
    const std::filesystem::path& path) {
  GlobalGroups groups;
  SegmentationConfig config;
  io::TokenFile file(path);
  while (file.next_line()) {
    if (file.tag() == "REF") {
      file.expect_size(2);
      groups.reference_take = file.int_at(1);
    } else if (file.tag() == "KNN") {
      file.expect_size(2);
      config.knn = file.int_at(1);
    } else if (file.tag() == "SWAP") {
      file.expect_size(2);
      config.swap = file.int_at(1) != 0;
    } else if (file.tag() == "ORDER") {
      const int n = file.int_at(1);
      file.expect_size(2 + static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        groups.merge_order.push_back(file.int_at(2 + static_cast<size_t>(i)));
      }
    } else if (file.tag() == "UNMERGED") {
      const int n = file.int_at(1);
      file.expect_size(2 + static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        groups.unmerged_takes.push_back(file.int_at(2 + static_cast<size_t>(i)));
      }
    } else if (file.tag() == "GGRP") {
      file.expect_min_size(3);
      const int index = file.int_at(1);
      const int n = file.int_at(2);
      file.expect_size(3 + static_cast<size_t>(n));
      if (index != 1 && index != 2) {
        file.fail("group index must be 1 or 2");
      }
      std::vector<int>& set = index == 1 ? groups.group1 : groups.group2;
      for (int i = 0; i < n; ++i) {
        set.push_back(file.int_at(3 + static_cast<size_t>(i)));
      }
    } else {
      file.fail("unexpected line tag '" + file.tag() + "'");
    }
  }
  return {groups, config};
}

}  // namespace tbsfm
