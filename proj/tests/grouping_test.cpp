#include "tbsfm/grouping.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tbsfm/simulator.hpp"

namespace tbsfm {
namespace {

using test::random_inward_pose;

RegisteredPose make_pose(int image_id, int target_take, std::vector<int> point_ids) {
  RegisteredPose pose;
  pose.image_id = image_id;
  pose.target_take = target_take;
  for (size_t i = 0; i < point_ids.size(); ++i) {
    pose.inliers.emplace_back(point_ids[i], static_cast<int>(i));
  }
  return pose;
}

PosePair make_pair(std::vector<int> set1, std::vector<int> set2) {
  PosePair pair;
  pair.set1 = std::move(set1);
  pair.set2 = std::move(set2);
  std::sort(pair.set1.begin(), pair.set1.end());
  std::sort(pair.set2.begin(), pair.set2.end());
  pair.support = 1;
  return pair;
}

TEST(ExtractPosePairs, CombinationCounts) {
  Registration registration;
  registration.poses[{10, 2}] = {make_pose(10, 2, {1, 2, 3})};
  EXPECT_EQ(extract_pose_pairs(registration, 2).size(), 0u);

  registration.poses[{10, 2}] = {make_pose(10, 2, {1, 2, 3}), make_pose(10, 2, {4, 5})};
  EXPECT_EQ(extract_pose_pairs(registration, 2).size(), 1u);

  registration.poses[{10, 2}] = {make_pose(10, 2, {1, 2, 3}), make_pose(10, 2, {4, 5}),
                                 make_pose(10, 2, {6, 7})};
  EXPECT_EQ(extract_pose_pairs(registration, 2).size(), 3u);

  // Other takes' registrations do not contribute.
  EXPECT_EQ(extract_pose_pairs(registration, 3).size(), 0u);
}

TEST(LinkageStep, IdenticalSetsMergeStraight) {
  std::vector<PosePair> pairs{make_pair({1, 2, 3}, {10, 11}), make_pair({1, 2, 3}, {10, 11})};
  LinkageOptions options;
  const auto merge = linkage_step(pairs, options);
  ASSERT_TRUE(merge.has_value());
  EXPECT_FALSE(merge->crossed);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].set1, (std::vector<int>{1, 2, 3}));  // idempotent union
  EXPECT_EQ(pairs[0].set2, (std::vector<int>{10, 11}));
  EXPECT_EQ(pairs[0].support, 2);
}

TEST(LinkageStep, SwappedObjectsMergeCrossed) {
  std::vector<PosePair> pairs{make_pair({1, 2, 3}, {10, 11}), make_pair({10, 11}, {1, 2, 3})};
  LinkageOptions options;
  const auto merge = linkage_step(pairs, options);
  ASSERT_TRUE(merge.has_value());
  EXPECT_TRUE(merge->crossed);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].set1, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(pairs[0].set2, (std::vector<int>{10, 11}));
}

TEST(LinkageStep, NoSharedPointsTerminates) {
  std::vector<PosePair> pairs{make_pair({1, 2}, {3, 4}), make_pair({5, 6}, {7, 8})};
  LinkageOptions options;
  EXPECT_FALSE(linkage_step(pairs, options).has_value());
  EXPECT_EQ(pairs.size(), 2u);
}

TEST(LinkageStep, ContaminatedCrossIntersectionBlocksMerge) {
  // The straight merge is inadmissible when a cross intersection exceeds the
  // threshold fraction of the smaller set.
  std::vector<PosePair> pairs{
      make_pair({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, {20, 21, 22}),
      make_pair({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, {3, 21, 22}),  // 3 contaminates
  };
  LinkageOptions options;
  const auto merge = linkage_step(pairs, options);
  EXPECT_FALSE(merge.has_value());
}

TEST(LinkageStep, MonotoneAndTerminating) {
  Rng rng(51);
  std::vector<PosePair> pairs;
  for (int i = 0; i < 12; ++i) {
    std::vector<int> set1, set2;
    for (int k = 0; k < 30; ++k) {
      if (rng.uniform() < 0.7) set1.push_back(k);
      if (rng.uniform() < 0.7) set2.push_back(100 + k);
    }
    pairs.push_back(make_pair(set1, set2));
  }
  LinkageOptions options;
  const size_t initial = pairs.size();
  size_t steps = 0;
  size_t previous_sizes = 0;
  for (const PosePair& pair : pairs) {
    previous_sizes += pair.set1.size() + pair.set2.size();
  }
  while (linkage_step(pairs, options).has_value()) {
    ++steps;
    ASSERT_LE(steps, initial - 1);  // strictly one fewer pair per merge
    size_t sizes = 0;
    int support = 0;
    for (const PosePair& pair : pairs) {
      sizes += pair.set1.size() + pair.set2.size();
      support += pair.support;
    }
    EXPECT_EQ(support, static_cast<int>(initial));  // support is additive
    previous_sizes = sizes;
  }
  EXPECT_EQ(pairs.size(), initial - steps);
}

TEST(GroupTake, SinglePairReturnedAsIs) {
  LinkageOptions options;
  const TakeGroupPair group = group_take(3, {make_pair({1, 2, 3, 4}, {10, 11, 12})}, options);
  EXPECT_EQ(group.take_id, 3);
  EXPECT_EQ(group.support, 1);
  EXPECT_EQ(group.group1, (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(group.group2, (std::vector<int>{10, 11, 12}));
}

TEST(GroupTake, EmptyPairsIsAnError) {
  LinkageOptions options;
  EXPECT_THROW(group_take(1, {}, options), std::invalid_argument);
}

TEST(GroupTake, DegeneratePairFlagged) {
  LinkageOptions options;
  std::vector<int> big;
  for (int i = 0; i < 200; ++i) {
    big.push_back(i);
  }
  const TakeGroupPair group = group_take(1, {make_pair(big, {500})}, options);
  EXPECT_TRUE(group.degenerate);
}

TEST(GroupTake, PermutationInvariantOnSimulatedScene) {
  SimConfig config;
  config.seed = 52;
  config.takes = 2;
  config.background_points = 150;
  config.foreground_points = 80;
  config.cameras_per_take = 6;
  config.visibility_fraction = 0.95;
  const SimResult result = generate(config);
  RansacParams params;
  params.seed = 11;
  const Registration registration = register_all(result.scene, params, 1);
  std::vector<PosePair> pairs = extract_pose_pairs(registration, 2);
  ASSERT_GE(pairs.size(), 3u);

  LinkageOptions options;
  const TakeGroupPair direct = group_take(2, pairs, options);

  std::vector<PosePair> shuffled = pairs;
  Rng rng(53);
  rng.shuffle(shuffled);
  const TakeGroupPair permuted = group_take(2, shuffled, options);
  EXPECT_EQ(direct.group1, permuted.group1);
  EXPECT_EQ(direct.group2, permuted.group2);
  EXPECT_EQ(direct.support, permuted.support);
}

TEST(GroupTake, SimulatedGroupsAreGroundTruthPure) {
  SimConfig config;
  config.seed = 54;
  config.takes = 2;
  config.background_points = 200;
  config.foreground_points = 100;
  config.cameras_per_take = 8;
  config.visibility_fraction = 0.9;
  // A clearly moving object: points consistent with both poses would otherwise
  // blur the expected pure grouping.
  config.foreground_rotation_magnitude = 0.5;
  config.foreground_translation_magnitude = 0.8;
  const SimResult result = generate(config);
  RansacParams params;
  params.seed = 12;
  const Registration registration = register_all(result.scene, params, 1);

  for (const TakeModel& take : result.scene.takes) {
    std::vector<PosePair> pairs = extract_pose_pairs(registration, take.take_id);
    ASSERT_FALSE(pairs.empty());
    // Support of the winner equals the number of source cameras that produced
    // exactly one pose pair toward this take.
    int cameras_with_pairs = 0;
    for (const auto& [key, poses] : registration.poses) {
      cameras_with_pairs += (key.second == take.take_id && poses.size() == 2) ? 1 : 0;
    }
    LinkageOptions options;
    const TakeGroupPair group = group_take(take.take_id, pairs, options);
    EXPECT_EQ(group.support, cameras_with_pairs);

    const auto purity = [&](const std::vector<int>& set) {
      std::map<Label, int> counts;
      for (const int id : set) {
        ++counts[result.ground_truth.labels.at({take.take_id, id})];
      }
      return static_cast<double>(std::max(counts[Label::kBackground],
                                          counts[Label::kForeground])) /
             static_cast<double>(set.size());
    };
    EXPECT_GE(purity(group.group1), 0.99);
    EXPECT_GE(purity(group.group2), 0.99);
  }
}

TEST(ForegroundMotionFromPair, IdenticalPosesGiveZeroMotion) {
  Rng rng(55);
  const CameraPose pose = random_inward_pose(rng);
  const RigidMotion motion = foreground_motion_from_pair(pose, pose);
  EXPECT_TRUE(motion.is_identity(1e-12));
}

TEST(ForegroundMotionFromPair, MatchesGroundTruthConstruction) {
  // Forward oracle: camera of take s registered toward take t; the pair gives
  // the foreground motion from configuration t to configuration s in delta_t.
  Rng rng(56);
  for (int i = 0; i < 200; ++i) {
    const test::WorldFixture world = test::random_world(rng, 3);
    const int s = 2, t = 1;
    const CameraPose world_pose = random_inward_pose(rng);
    const CameraPose pose_b =
        world.registered_pose(world_pose, s, t, RegisteredObject::kBackground);
    const CameraPose pose_f =
        world.registered_pose(world_pose, s, t, RegisteredObject::kForeground);
    const RigidMotion estimated = foreground_motion_from_pair(pose_b, pose_f);

    const RigidMotion expected = motion_in_frame(
        compose_motion(world.world_motion(t), world.world_motion(s)), world.gauge(t));
    EXPECT_LT(rotation_geodesic_distance(estimated.rotation, expected.rotation), 1e-9);
    EXPECT_LT((estimated.translation - expected.translation).norm(), 1e-9);

    // Swapped pair gives the inverse motion.
    const RigidMotion backward = foreground_motion_from_pair(pose_f, pose_b);
    const RigidMotion inverse = invert_motion(estimated);
    EXPECT_LT(rotation_geodesic_distance(backward.rotation, inverse.rotation), 1e-9);
    EXPECT_LT((backward.translation - inverse.translation).norm(), 1e-9);
  }
}

TEST(ForegroundMotionFromPair, SwapEqualsInversionProperty) {
  Rng rng(57);
  for (int i = 0; i < 100; ++i) {
    const CameraPose a = random_inward_pose(rng);
    const CameraPose b = random_inward_pose(rng);
    const RigidMotion forward = foreground_motion_from_pair(a, b);
    const RigidMotion backward = foreground_motion_from_pair(b, a);
    const RigidMotion inverse = invert_motion(forward);
    EXPECT_LT(rotation_geodesic_distance(backward.rotation, inverse.rotation), 1e-10);
    EXPECT_LT((backward.translation - inverse.translation).norm(), 1e-10);
  }
}

std::vector<PosePair> pairs_with_motion(const test::WorldFixture& world, int s, int t,
                                        int count, bool swap_order, Rng& rng) {
  std::vector<PosePair> pairs;
  for (int i = 0; i < count; ++i) {
    const CameraPose world_pose = random_inward_pose(rng);
    PosePair pair;
    pair.first.source_take = s;
    pair.second.source_take = s;
    pair.first.pose = world.registered_pose(
        world_pose, s, t, swap_order ? RegisteredObject::kForeground : RegisteredObject::kBackground);
    pair.second.pose = world.registered_pose(
        world_pose, s, t, swap_order ? RegisteredObject::kBackground : RegisteredObject::kForeground);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

test::WorldFixture well_separated_world(Rng& rng) {
  test::WorldFixture world;
  world.motions.push_back(RigidMotion{});
  world.motions.push_back(RigidMotion{Rotation3::from_axis_angle(0.5 * test::random_unit(rng)),
                                      0.8 * test::random_unit(rng)});
  world.take_from_world.push_back(test::random_similarity(rng));
  world.take_from_world.push_back(test::random_similarity(rng));
  return world;
}

TEST(MotionCluster, SingleForwardCluster) {
  Rng rng(58);
  const test::WorldFixture world = well_separated_world(rng);
  const auto pairs = pairs_with_motion(world, 2, 1, 6, false, rng);
  LinkageOptions options;
  const MotionClusters clusters = motion_cluster(pairs, options, 10.0);
  ASSERT_TRUE(clusters.enabled);
  EXPECT_EQ(clusters.forward.size(), 6u);
  EXPECT_TRUE(clusters.backward.empty());
  EXPECT_TRUE(clusters.zero.empty());
}

TEST(MotionCluster, ForwardAndBackwardClusters) {
  Rng rng(59);
  const test::WorldFixture world = well_separated_world(rng);
  auto pairs = pairs_with_motion(world, 2, 1, 5, false, rng);
  const auto swapped = pairs_with_motion(world, 2, 1, 4, true, rng);
  pairs.insert(pairs.end(), swapped.begin(), swapped.end());

  LinkageOptions options;
  const MotionClusters clusters = motion_cluster(pairs, options, 10.0);
  ASSERT_TRUE(clusters.enabled);
  EXPECT_EQ(clusters.forward.size(), 5u);
  EXPECT_EQ(clusters.backward.size(), 4u);

  // The two cluster motions are mutually inverse.
  const RigidMotion forward = foreground_motion_from_pair(
      pairs[clusters.forward[0]].first.pose, pairs[clusters.forward[0]].second.pose);
  const RigidMotion backward = foreground_motion_from_pair(
      pairs[clusters.backward[0]].first.pose, pairs[clusters.backward[0]].second.pose);
  const RigidMotion inverse = invert_motion(forward);
  EXPECT_LT(rotation_geodesic_distance(backward.rotation, inverse.rotation), 1e-6);
  EXPECT_LT((backward.translation - inverse.translation).norm(), 1e-6);
}

TEST(MotionCluster, AllZeroMotionsDisableCriterion) {
  Rng rng(60);
  std::vector<PosePair> pairs;
  for (int i = 0; i < 5; ++i) {
    const CameraPose pose = random_inward_pose(rng);
    PosePair pair;
    pair.first.pose = pose;
    pair.second.pose = pose;
    pairs.push_back(std::move(pair));
  }
  LinkageOptions options;
  const MotionClusters clusters = motion_cluster(pairs, options, 10.0);
  EXPECT_FALSE(clusters.enabled);
  EXPECT_EQ(clusters.zero.size(), 5u);
}

TEST(GroupAll, MotionCriterionKeepsGroupsPure) {
  SimConfig config;
  config.seed = 64;
  config.takes = 2;
  config.background_points = 200;
  config.foreground_points = 100;
  config.cameras_per_take = 8;
  config.visibility_fraction = 0.9;
  config.foreground_rotation_magnitude = 0.5;
  config.foreground_translation_magnitude = 0.8;
  const SimResult result = generate(config);
  RansacParams params;
  params.seed = 14;
  const Registration registration = register_all(result.scene, params, 1);

  LinkageOptions options;
  options.motion_criterion = true;
  const GroupingResult grouping = group_all(result.scene, registration, options);
  ASSERT_EQ(grouping.groups.size(), 2u);
  EXPECT_FALSE(grouping.motions.empty());
  for (const TakeGroupPair& group : grouping.groups) {
    const auto purity = [&](const std::vector<int>& set) {
      std::map<Label, int> counts;
      for (const int id : set) {
        ++counts[result.ground_truth.labels.at({group.take_id, id})];
      }
      return static_cast<double>(std::max(counts[Label::kBackground],
                                          counts[Label::kForeground])) /
             static_cast<double>(set.size());
    };
    EXPECT_GE(purity(group.group1), 0.99);
    EXPECT_GE(purity(group.group2), 0.99);
    EXPECT_GE(group.support, 4);
  }

  // The recorded cluster motions survive the dump format.
  const auto dir = test::make_temp_dir("groups_motion_io");
  save_groups(grouping, dir / "groups.txt");
  const GroupingResult loaded = load_groups(dir / "groups.txt");
  ASSERT_EQ(loaded.motions.size(), grouping.motions.size());
  for (size_t i = 0; i < loaded.motions.size(); ++i) {
    EXPECT_EQ(loaded.motions[i].source_take, grouping.motions[i].source_take);
    EXPECT_EQ(loaded.motions[i].target_take, grouping.motions[i].target_take);
    EXPECT_LT(rotation_geodesic_distance(loaded.motions[i].motion.rotation,
                                         grouping.motions[i].motion.rotation),
              1e-12);
  }
}

TEST(Groups, SaveLoadRoundTrip) {
  GroupingResult result;
  result.groups.push_back({2, {1, 2, 3}, {9, 10}, 7, false});
  result.groups.push_back({5, {4}, {6, 8}, 2, true});
  result.failures.emplace_back(3, "no camera was registered twice");

  const auto dir = test::make_temp_dir("groups_io");
  save_groups(result, dir / "groups.txt");
  const GroupingResult loaded = load_groups(dir / "groups.txt");
  ASSERT_EQ(loaded.groups.size(), 2u);
  EXPECT_EQ(loaded.groups[0].take_id, 2);
  EXPECT_EQ(loaded.groups[0].group1, result.groups[0].group1);
  EXPECT_EQ(loaded.groups[0].group2, result.groups[0].group2);
  EXPECT_EQ(loaded.groups[0].support, 7);
  EXPECT_FALSE(loaded.groups[0].degenerate);
  EXPECT_TRUE(loaded.groups[1].degenerate);
  ASSERT_EQ(loaded.failures.size(), 1u);
  EXPECT_EQ(loaded.failures[0].first, 3);
}

}  // namespace
}  // namespace tbsfm
