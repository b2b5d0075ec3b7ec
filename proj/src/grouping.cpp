#include "tbsfm/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "tbsfm/text_io.hpp"

namespace tbsfm {
namespace {

std::vector<int> sorted_point_ids(const RegisteredPose& pose) {
  std::vector<int> ids;
  ids.reserve(pose.inliers.size());
  for (const auto& [point_id, obs_index] : pose.inliers) {
    ids.push_back(point_id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

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

// theta_{rho sigma}: 2% of the smaller of the two compared sets.
double threshold(const LinkageOptions& options, const std::vector<int>& a,
                 const std::vector<int>& b) {
  return options.threshold_fraction * static_cast<double>(std::min(a.size(), b.size()));
}

bool classes_allow_straight(MotionClass a, MotionClass b) {
  if (a == MotionClass::kOther || b == MotionClass::kOther) {
    return false;
  }
  if (a == MotionClass::kExempt || b == MotionClass::kExempt) {
    return true;
  }
  return a == b;
}

bool classes_allow_crossed(MotionClass a, MotionClass b) {
  if (a == MotionClass::kOther || b == MotionClass::kOther) {
    return false;
  }
  if (a == MotionClass::kExempt || b == MotionClass::kExempt) {
    return true;
  }
  return a != b;
}

}  // namespace

double take_scene_scale(const TakeModel& take) {
  if (take.points.empty()) {
    return 1.0;
  }
  Vec3 lo = take.points.begin()->second;
  Vec3 hi = lo;
  for (const auto& [id, p] : take.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double diagonal = (hi - lo).norm();
  return diagonal > 0.0 ? diagonal : 1.0;
}

std::vector<PosePair> extract_pose_pairs(const Registration& registration, int take_t) {
  std::vector<PosePair> pairs;
  for (const auto& [key, poses] : registration.poses) {
    if (key.second != take_t || poses.size() < 2) {
      continue;
    }
    // Poses arrive sorted by consensus size; keep that order inside each pair.
    for (size_t i = 0; i < poses.size(); ++i) {
      for (size_t j = i + 1; j < poses.size(); ++j) {
        PosePair pair;
        pair.first = poses[i];
        pair.second = poses[j];
        pair.set1 = sorted_point_ids(poses[i]);
        pair.set2 = sorted_point_ids(poses[j]);
        pair.support = 1;
        pairs.push_back(std::move(pair));
      }
    }
  }
  return pairs;
}

namespace {

// Content signature of the merge result; used to break value ties so that the
// outcome does not depend on the order the pairs were listed in.
std::vector<int> merge_key(const PosePair& p, const PosePair& q, bool crossed) {
  const std::vector<int> u1 = set_union(p.set1, crossed ? q.set2 : q.set1);
  const std::vector<int> u2 = set_union(p.set2, crossed ? q.set1 : q.set2);
  std::vector<int> key;
  const bool first_lower = std::lexicographical_compare(u1.begin(), u1.end(), u2.begin(), u2.end());
  const std::vector<int>& a = first_lower ? u1 : u2;
  const std::vector<int>& b = first_lower ? u2 : u1;
  key.reserve(a.size() + b.size() + 1);
  key.insert(key.end(), a.begin(), a.end());
  key.push_back(-1);
  key.insert(key.end(), b.begin(), b.end());
  return key;
}

struct MergeCandidate {
  int value = 0;
  size_t i = 0;
  size_t j = 0;
  bool crossed = false;
  std::vector<int> key;  // computed lazily at the first value tie
  bool key_computed = false;

  void offer(const std::vector<PosePair>& pairs, int value_in, size_t i_in, size_t j_in,
             bool crossed_in) {
    if (value_in < value) {
      return;
    }
    if (value_in > value) {
      value = value_in;
      i = i_in;
      j = j_in;
      crossed = crossed_in;
      key.clear();
      key_computed = false;
      return;
    }
    if (!key_computed) {
      key = merge_key(pairs[i], pairs[j], crossed);
      key_computed = true;
    }
    std::vector<int> key_in = merge_key(pairs[i_in], pairs[j_in], crossed_in);
    if (std::lexicographical_compare(key_in.begin(), key_in.end(), key.begin(), key.end())) {
      i = i_in;
      j = j_in;
      crossed = crossed_in;
      key = std::move(key_in);
    }
  }
};

}  // namespace

std::optional<LinkageMerge> linkage_step(std::vector<PosePair>& pairs,
                                         const LinkageOptions& options) {
  if (pairs.size() < 2) {
    return std::nullopt;
  }

  MergeCandidate straight;
  MergeCandidate crossed_best;

  for (size_t i = 0; i < pairs.size(); ++i) {
    for (size_t j = i + 1; j < pairs.size(); ++j) {
      const PosePair& p = pairs[i];
      const PosePair& q = pairs[j];
      const int s11 = intersection_size(p.set1, q.set1);
      const int s22 = intersection_size(p.set2, q.set2);
      const int s12 = intersection_size(p.set1, q.set2);
      const int s21 = intersection_size(p.set2, q.set1);

      // Straight: matching objects align while the cross intersections stay small.
      if (s11 + s22 > 0 && classes_allow_straight(p.motion_class, q.motion_class) &&
          s12 < threshold(options, p.set1, q.set2) &&
          s21 < threshold(options, p.set2, q.set1)) {
        straight.offer(pairs, s11 + s22, i, j, false);
      }
      // Crossed: the two pairs list the objects in opposite order.
      if (s12 + s21 > 0 && classes_allow_crossed(p.motion_class, q.motion_class) &&
          s11 < threshold(options, p.set1, q.set1) &&
          s22 < threshold(options, p.set2, q.set2)) {
        crossed_best.offer(pairs, s12 + s21, i, j, true);
      }
    }
  }
  const int best_straight = straight.value;
  const int best_crossed = crossed_best.value;
  const size_t straight_i = straight.i, straight_j = straight.j;
  const size_t crossed_i = crossed_best.i, crossed_j = crossed_best.j;

  // A merge needs at least one shared point as evidence.
  if (best_straight == 0 && best_crossed == 0) {
    return std::nullopt;
  }

  LinkageMerge merge;
  if (best_straight >= best_crossed) {
    merge = {straight_i, straight_j, false, best_straight};
    pairs[merge.dst].set1 = set_union(pairs[merge.dst].set1, pairs[merge.src].set1);
    pairs[merge.dst].set2 = set_union(pairs[merge.dst].set2, pairs[merge.src].set2);
  } else {
    merge = {crossed_i, crossed_j, true, best_crossed};
    pairs[merge.dst].set1 = set_union(pairs[merge.dst].set1, pairs[merge.src].set2);
    pairs[merge.dst].set2 = set_union(pairs[merge.dst].set2, pairs[merge.src].set1);
  }
  pairs[merge.dst].support += pairs[merge.src].support;
  pairs.erase(pairs.begin() + static_cast<std::ptrdiff_t>(merge.src));
  return merge;
}

TakeGroupPair group_take(int take_t, std::vector<PosePair> pairs, const LinkageOptions& options) {
  if (pairs.empty()) {
    throw std::invalid_argument("group_take needs at least one pose pair");
  }
  while (linkage_step(pairs, options).has_value()) {
  }

  size_t best = 0;
  for (size_t i = 1; i < pairs.size(); ++i) {
    const size_t size_i = pairs[i].set1.size() + pairs[i].set2.size();
    const size_t size_b = pairs[best].set1.size() + pairs[best].set2.size();
    if (pairs[i].support > pairs[best].support ||
        (pairs[i].support == pairs[best].support && size_i > size_b)) {
      best = i;
    }
  }

  TakeGroupPair group;
  group.take_id = take_t;
  group.group1 = std::move(pairs[best].set1);
  group.group2 = std::move(pairs[best].set2);
  group.support = pairs[best].support;
  const size_t smaller = std::min(group.group1.size(), group.group2.size());
  const size_t larger = std::max(group.group1.size(), group.group2.size());
  group.degenerate =
      smaller < std::max<size_t>(3, static_cast<size_t>(0.05 * static_cast<double>(larger)));
  return group;
}

RigidMotion foreground_motion_from_pair(const CameraPose& pose_background,
                                        const CameraPose& pose_foreground) {
  const Rotation3 a = pose_background.rotation.inverse() * pose_foreground.rotation;
  return {a, pose_background.center - a * pose_foreground.center};
}

MotionClusters motion_cluster(const std::vector<PosePair>& pairs,
                              const LinkageOptions& options,
                              double scene_scale) {
  MotionClusters clusters;
  if (pairs.size() < 2) {
    return clusters;
  }

  struct MotionSample {
    size_t pair_index;
    Rotation3 rotation;
    Vec3 translation;
  };
  std::vector<MotionSample> samples;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const RigidMotion motion =
        foreground_motion_from_pair(pairs[i].first.pose, pairs[i].second.pose);
    if (motion.rotation.axis_angle().norm() < options.zero_rotation_tolerance &&
        motion.translation.norm() < options.zero_translation_fraction * scene_scale) {
      clusters.zero.push_back(i);
    } else {
      samples.push_back({i, motion.rotation, motion.translation});
    }
  }
  if (samples.size() < 2) {
    for (const MotionSample& s : samples) {
      clusters.outliers.push_back(s.pair_index);
    }
    return clusters;
  }
  clusters.enabled = true;

  // Sequential consensus over the motion samples; trying every sample as a
  // cluster center keeps the step deterministic.
  std::vector<MotionSample> remaining = samples;
  std::vector<std::vector<size_t>> found;
  while (!remaining.empty() && found.size() < 4) {
    std::vector<size_t> best_members;
    for (size_t c = 0; c < remaining.size(); ++c) {
      std::vector<size_t> members;
      for (size_t m = 0; m < remaining.size(); ++m) {
        if (rotation_geodesic_distance(remaining[c].rotation, remaining[m].rotation) <
                options.cluster_rotation_tolerance &&
            (remaining[c].translation - remaining[m].translation).norm() <
                options.cluster_translation_fraction * scene_scale) {
          members.push_back(m);
        }
      }
      if (members.size() > best_members.size()) {
        best_members = std::move(members);
      }
    }
    std::vector<size_t> cluster;
    std::vector<MotionSample> next;
    for (size_t m = 0, k = 0; m < remaining.size(); ++m) {
      if (k < best_members.size() && best_members[k] == m) {
        cluster.push_back(remaining[m].pair_index);
        ++k;
      } else {
        next.push_back(remaining[m]);
      }
    }
    found.push_back(std::move(cluster));
    remaining = std::move(next);
  }
  for (const MotionSample& s : remaining) {
    clusters.outliers.push_back(s.pair_index);
  }

  std::stable_sort(found.begin(), found.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  if (!found.empty()) {
    clusters.forward = found[0];
  }
  if (found.size() > 1) {
    clusters.backward = found[1];
  }
  for (size_t i = 2; i < found.size(); ++i) {
    clusters.outliers.insert(clusters.outliers.end(), found[i].begin(), found[i].end());
  }
  std::sort(clusters.outliers.begin(), clusters.outliers.end());
  return clusters;
}

void apply_motion_criterion(std::vector<PosePair>& pairs,
                            const LinkageOptions& options,
                            double scene_scale) {
  // The motions of pairs from different source takes differ, so the slices
  // are clustered separately; only the (background, foreground) ordering
  // carries over between slices.
  std::map<int, std::vector<size_t>> by_source;
  for (size_t i = 0; i < pairs.size(); ++i) {
    by_source[pairs[i].first.source_take].push_back(i);
  }
  for (const auto& [source_take, indices] : by_source) {
    std::vector<PosePair> slice;
    slice.reserve(indices.size());
    for (const size_t i : indices) {
      slice.push_back(pairs[i]);
    }
    const MotionClusters clusters = motion_cluster(slice, options, scene_scale);
    if (!clusters.enabled) {
      continue;  // criterion disabled for this slice; intersections decide alone
    }
    for (const size_t local : clusters.forward) {
      pairs[indices[local]].motion_class = MotionClass::kForward;
    }
    for (const size_t local : clusters.backward) {
      pairs[indices[local]].motion_class = MotionClass::kBackward;
    }
    for (const size_t local : clusters.zero) {
      pairs[indices[local]].motion_class = MotionClass::kOther;
    }
    for (const size_t local : clusters.outliers) {
      pairs[indices[local]].motion_class = MotionClass::kOther;
    }
  }
}

GroupingResult group_all(const MultiTakeScene& scene,
                         const Registration& registration,
                         const LinkageOptions& options) {
  GroupingResult result;
  for (const TakeModel& take : scene.takes) {
    std::vector<PosePair> pairs = extract_pose_pairs(registration, take.take_id);
    if (pairs.empty()) {
      result.failures.emplace_back(take.take_id,
                                   "no camera was sequentially registered with two poses");
      continue;
    }
    if (options.motion_criterion) {
      const double scale = take_scene_scale(take);
      apply_motion_criterion(pairs, options, scale);
      // Record the forward-cluster mean per source take for the dump.
      std::map<int, std::vector<size_t>> by_source;
      for (size_t i = 0; i < pairs.size(); ++i) {
        by_source[pairs[i].first.source_take].push_back(i);
      }
      for (const auto& [source_take, indices] : by_source) {
        std::vector<PosePair> slice;
        for (const size_t i : indices) {
          slice.push_back(pairs[i]);
        }
        const MotionClusters clusters = motion_cluster(slice, options, scale);
        if (!clusters.enabled || clusters.forward.empty()) {
          continue;
        }
        Mat3 rotation_sum = Mat3::Zero();
        Vec3 translation_sum = Vec3::Zero();
        for (const size_t local : clusters.forward) {
          const RigidMotion m = foreground_motion_from_pair(slice[local].first.pose,
                                                            slice[local].second.pose);
          rotation_sum += m.rotation.matrix();
          translation_sum += m.translation;
        }
        result.motions.push_back(
            {source_take, take.take_id,
             RigidMotion{Rotation3::project_to_rotation(rotation_sum),
                         translation_sum / static_cast<double>(clusters.forward.size())}});
      }
    }
    result.groups.push_back(group_take(take.take_id, std::move(pairs), options));
  }
  return result;
}

void save_groups(const GroupingResult& result, const std::filesystem::path& path) {
  io::LineWriter out(path);
  for (const TakeGroupPair& group : result.groups) {
    out << "SUP" << group.take_id << group.support << (group.degenerate ? 1 : 0);
    out.end_line();
    for (int index = 1; index <= 2; ++index) {
      const std::vector<int>& set = index == 1 ? group.group1 : group.group2;
      out << "GRP" << group.take_id << index << static_cast<int>(set.size());
      for (const int id : set) {
        out << id;
      }
      out.end_line();
    }
  }
  for (const auto& [take_id, reason] : result.failures) {
    out << "FAIL" << take_id << reason;
    out.end_line();
  }
  for (const auto& estimate : result.motions) {
    out << "MOT" << estimate.source_take << estimate.target_take;
    const Vec3 axis_angle = estimate.motion.rotation.axis_angle();
    io::write_vec3(out, axis_angle);
    io::write_vec3(out, estimate.motion.translation);
    out.end_line();
  }
}

GroupingResult load_groups(const std::filesystem::path& path) {
  GroupingResult result;
  io::TokenFile file(path);
  std::map<int, TakeGroupPair> groups;
  std::vector<int> order;
  while (file.next_line()) {
    if (file.tag() == "SUP") {
      file.expect_size(4);
      const int take_id = file.int_at(1);
      if (groups.find(take_id) == groups.end()) {
        order.push_back(take_id);
      }
      groups[take_id].take_id = take_id;
      groups[take_id].support = file.int_at(2);
      groups[take_id].degenerate = file.int_at(3) != 0;
    } else if (file.tag() == "GRP") {
      file.expect_min_size(4);
      const int take_id = file.int_at(1);
      const int index = file.int_at(2);
      const int n = file.int_at(3);
      file.expect_size(4 + static_cast<size_t>(n));
      if (groups.find(take_id) == groups.end()) {
        file.fail("GRP before SUP for take " + std::to_string(take_id));
      }
      if (index != 1 && index != 2) {
        file.fail("group index must be 1 or 2");
      }
      std::vector<int>& set = index == 1 ? groups[take_id].group1 : groups[take_id].group2;
      for (int i = 0; i < n; ++i) {
        set.push_back(file.int_at(4 + static_cast<size_t>(i)));
      }
    } else if (file.tag() == "FAIL") {
      file.expect_min_size(2);
      std::string reason;
      for (size_t i = 2; i < file.size(); ++i) {
        if (!reason.empty()) {
          reason += ' ';
        }
        reason += file.str_at(i);
      }
      result.failures.emplace_back(file.int_at(1), reason);
    } else if (file.tag() == "MOT") {
      file.expect_size(9);
      result.motions.push_back(
          {file.int_at(1), file.int_at(2),
           RigidMotion{Rotation3::from_axis_angle(io::read_vec3(file, 3)),
                       io::read_vec3(file, 6)}});
    } else {
      file.fail("expected SUP, GRP, FAIL or MOT line");
    }
  }
  for (const int take_id : order) {
    result.groups.push_back(std::move(groups[take_id]));
  }
  return result;
}

}  // namespace tbsfm
