#include "tbsfm/registration.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tbsfm/simulator.hpp"

namespace tbsfm {
namespace {

using test::random_inward_pose;
using test::random_unit;

SimConfig registration_config(uint64_t seed) {
  SimConfig config;
  config.seed = seed;
  config.takes = 2;
  config.background_points = 150;
  config.foreground_points = 80;
  config.cameras_per_take = 6;
  config.visibility_fraction = 0.95;
  return config;
}

TEST(P3P, RecoversForwardProjectedPose) {
  Rng rng(31);
  for (int i = 0; i < 200; ++i) {
    const CameraPose pose = random_inward_pose(rng);
    std::array<Vec3, 3> points;
    std::array<Vec2, 3> pixels;
    for (int k = 0; k < 3; ++k) {
      points[static_cast<size_t>(k)] = Vec3{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                                            rng.uniform(-1.5, 1.5)};
      pixels[static_cast<size_t>(k)] = project(pose, points[static_cast<size_t>(k)]);
    }
    const auto solutions = p3p_minimal(pixels, points, pose.intrinsics);
    ASSERT_FALSE(solutions.empty());
    double best = 1e9;
    for (const CameraPose& solution : solutions) {
      best = std::min(best, rotation_geodesic_distance(solution.rotation, pose.rotation) +
                                (solution.center - pose.center).norm());
    }
    EXPECT_LT(best, 1e-8);
  }
}

TEST(P3P, CollinearPointsYieldNoSolution) {
  const Intrinsics k{1000.0, 1000.0, 500.0, 500.0};
  const std::array<Vec3, 3> points{Vec3{0, 0, 5}, Vec3{1, 0, 5}, Vec3{2, 0, 5}};
  CameraPose pose;
  pose.intrinsics = k;
  pose.center = {0.5, 0.2, 0.0};
  std::array<Vec2, 3> pixels;
  for (int i = 0; i < 3; ++i) {
    pixels[static_cast<size_t>(i)] = project(pose, points[static_cast<size_t>(i)]);
  }
  EXPECT_TRUE(p3p_minimal(pixels, points, k).empty());
}

TEST(P3P, MonteCarloSolvableSamples) {
  // Every solvable sample must contain the true pose: all three points
  // reproject within 1e-6 px by construction of the returned set.
  Rng rng(32);
  int solved = 0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    const CameraPose pose = random_inward_pose(rng);
    std::array<Vec3, 3> points;
    std::array<Vec2, 3> pixels;
    for (int k = 0; k < 3; ++k) {
      points[static_cast<size_t>(k)] = 2.0 * random_unit(rng) + Vec3{0, 0, 0.5};
      pixels[static_cast<size_t>(k)] = project(pose, points[static_cast<size_t>(k)]);
    }
    const auto solutions = p3p_minimal(pixels, points, pose.intrinsics);
    double best = 1e9;
    for (const CameraPose& solution : solutions) {
      best = std::min(best, test::pose_distance(solution, pose));
    }
    solved += best < 1e-6 ? 1 : 0;
  }
  EXPECT_EQ(solved, trials);
}

std::vector<Corr2D3D> make_corrs(const CameraPose& pose, int n, Rng& rng) {
  std::vector<Corr2D3D> corrs;
  for (int i = 0; i < n; ++i) {
    const Vec3 point = Vec3{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                            rng.uniform(-1.0, 1.0)};
    corrs.push_back({project(pose, point), point, i, i});
  }
  return corrs;
}

TEST(PnPRansac, NoiselessAllInliers) {
  Rng rng(33);
  const CameraPose pose = random_inward_pose(rng);
  const auto corrs = make_corrs(pose, 60, rng);
  RansacParams params;
  params.seed = 1;
  Rng ransac_rng(7);
  const auto result = pnp_ransac(corrs, pose.intrinsics, params, ransac_rng);
  ASSERT_TRUE(result.has_value());
  EXPECT_EQ(result->inlier_count(), 60);
  EXPECT_LT(rotation_geodesic_distance(result->pose.rotation, pose.rotation), 1e-6);
}

TEST(PnPRansac, HalfOutliersRecovered) {
  Rng rng(34);
  const CameraPose pose = random_inward_pose(rng);
  std::vector<Corr2D3D> corrs = make_corrs(pose, 200, rng);
  // Half the correspondences become outliers; pixel noise sigma = 1 px on the rest.
  for (size_t i = 0; i < corrs.size(); ++i) {
    if (i % 2 == 0) {
      corrs[i].pixel = {rng.uniform(0.0, 1600.0), rng.uniform(0.0, 1200.0)};
    } else {
      corrs[i].pixel += Vec2{rng.normal(1.0), rng.normal(1.0)};
    }
  }
  RansacParams params;
  params.tau = 4.0;
  Rng ransac_rng(8);
  const auto result = pnp_ransac(corrs, pose.intrinsics, params, ransac_rng);
  ASSERT_TRUE(result.has_value());
  EXPECT_LT(rotation_geodesic_distance(result->pose.rotation, pose.rotation), 1e-3);
  int recalled = 0;
  for (const auto& [point_id, obs_index] : result->inliers) {
    recalled += point_id % 2 == 1 ? 1 : 0;  // odd ids were kept clean
  }
  EXPECT_GE(static_cast<double>(recalled) / 100.0, 0.95);
}

TEST(PnPRansac, TooFewCorrespondencesIsAnError) {
  Rng rng(35);
  const CameraPose pose = random_inward_pose(rng);
  const auto corrs = make_corrs(pose, 3, rng);
  RansacParams params;
  Rng ransac_rng(9);
  EXPECT_THROW(pnp_ransac(corrs, pose.intrinsics, params, ransac_rng), std::invalid_argument);
}

TEST(SequentialRegister, TwoPosesPartitionByLabel) {
  const SimResult result = generate(registration_config(41));
  RansacParams params;
  params.seed = 3;

  const TakeModel& take1 = result.scene.takes[0];
  int images_with_two = 0;
  for (const TakeImage& image : take1.images) {
    const auto poses = sequential_register(result.scene, image.image_id, 2, params);
    if (poses.size() < 2) {
      continue;
    }
    ++images_with_two;
    EXPECT_EQ(poses.size(), 2u);
    // Inlier sets partition by ground-truth label.
    for (size_t p = 0; p < 2; ++p) {
      std::map<Label, int> counts;
      for (const auto& [point_id, obs_index] : poses[p].inliers) {
        ++counts[result.ground_truth.labels.at({2, point_id})];
      }
      const int total = poses[p].inlier_count();
      const int majority = std::max(counts[Label::kBackground], counts[Label::kForeground]);
      EXPECT_EQ(majority, total);
    }
  }
  EXPECT_GE(images_with_two, 4);
}

TEST(SequentialRegister, SameTakeGivesOneDominantPose) {
  const SimResult result = generate(registration_config(42));
  RansacParams params;
  params.seed = 4;
  const TakeModel& take1 = result.scene.takes[0];
  const TakeImage& image = take1.images[0];
  const auto poses = sequential_register(result.scene, image.image_id, 1, params);
  ASSERT_EQ(poses.size(), 1u);
  EXPECT_LT(test::pose_distance(poses[0].pose, take1.pose(image)), 1e-6);
}

TEST(SequentialRegister, BackgroundOnlyTargetGivesOnePose) {
  // Strip the foreground from take 2's model: cameras seeing only the
  // background of that take register with a single pose.
  SimResult result = generate(registration_config(43));
  TakeModel& take2 = result.scene.takes[1];
  std::set<int> foreground_ids;
  for (const auto& [key, label] : result.ground_truth.labels) {
    if (key.first == 2 && label == Label::kForeground) {
      foreground_ids.insert(key.second);
    }
  }
  for (const int id : foreground_ids) {
    take2.points.erase(id);
  }
  for (TakeModel& take : result.scene.takes) {
    for (TakeImage& image : take.images) {
      for (Observation& obs : image.observations) {
        std::erase_if(obs.links, [&](const auto& link) {
          return link.first == 2 && foreground_ids.count(link.second) > 0;
        });
      }
    }
  }

  RansacParams params;
  params.seed = 5;
  const auto poses = sequential_register(result.scene, result.scene.takes[0].images[0].image_id,
                                         2, params);
  EXPECT_EQ(poses.size(), 1u);
}

TEST(RegisterAll, AttemptsEveryImageTakePair) {
  const SimResult result = generate(registration_config(44));
  RansacParams params;
  params.seed = 6;
  const Registration registration = register_all(result.scene, params, 1);
  EXPECT_EQ(registration.poses.size(),
            static_cast<size_t>(result.scene.image_count()));  // k=2: one other take each
  for (const auto& [key, poses] : registration.poses) {
    // Noiseless scene with both objects well visible: one pose per object.
    EXPECT_GE(poses.size(), 2u);
    // Invariant: every pose satisfies its own inlier predicate.
    const auto [take, image] = result.scene.find_image(key.first);
    const TakeModel& target = result.scene.take(key.second);
    for (const RegisteredPose& pose : poses) {
      for (const auto& [point_id, obs_index] : pose.inliers) {
        const Vec2& pixel = image->observations[static_cast<size_t>(obs_index)].pixel;
        const auto reproj = try_project(pose.pose, target.points.at(point_id));
        ASSERT_TRUE(reproj.has_value());
        EXPECT_LT((*reproj - pixel).norm(), params.tau);
      }
    }
    // Invariant: sequential inlier sets are disjoint.
    for (size_t a = 0; a < poses.size(); ++a) {
      for (size_t b = a + 1; b < poses.size(); ++b) {
        for (const auto& inlier : poses[a].inliers) {
          EXPECT_FALSE(poses[b].has_inlier(inlier.first, inlier.second));
        }
      }
    }
  }
}

TEST(RegisterAll, NoiselessFirstTwoPosesCoverCorrespondences) {
  const SimResult result = generate(registration_config(45));
  RansacParams params;
  params.seed = 7;
  const Registration registration = register_all(result.scene, params, 1);
  for (const auto& [key, poses] : registration.poses) {
    const auto corrs = correspondences(result.scene, key.first, key.second);
    // Count ground-truth points per object among the correspondences.
    std::map<Label, int> available;
    for (const auto& corr : corrs) {
      ++available[result.ground_truth.labels.at({key.second, corr.point_id})];
    }
    if (available[Label::kBackground] < params.min_inliers ||
        available[Label::kForeground] < params.min_inliers) {
      continue;
    }
    ASSERT_GE(poses.size(), 2u);
    size_t covered = 0;
    for (size_t p = 0; p < 2; ++p) {
      covered += poses[p].inliers.size();
    }
    EXPECT_GE(static_cast<double>(covered), 0.99 * static_cast<double>(corrs.size()));
  }
}

TEST(RegisterAll, NoCrossTakeLinksGivesEmptySets) {
  SimResult result = generate(registration_config(46));
  for (TakeModel& take : result.scene.takes) {
    for (TakeImage& image : take.images) {
      for (Observation& obs : image.observations) {
        std::erase_if(obs.links,
                      [&](const auto& link) { return link.first != take.take_id; });
      }
    }
  }
  RansacParams params;
  params.seed = 8;
  const Registration registration = register_all(result.scene, params, 1);
  for (const auto& [key, poses] : registration.poses) {
    EXPECT_TRUE(poses.empty());
  }
}

TEST(RegisterAll, DeterministicAcrossThreadCounts) {
  const SimResult result = generate(registration_config(47));
  RansacParams params;
  params.seed = 9;
  const Registration a = register_all(result.scene, params, 1);
  const Registration b = register_all(result.scene, params, 4);

  const auto dir_a = test::make_temp_dir("reg_threads_a");
  const auto dir_b = test::make_temp_dir("reg_threads_b");
  save_registration(a, dir_a / "registrations.txt");
  save_registration(b, dir_b / "registrations.txt");
  EXPECT_EQ(test::read_file(dir_a / "registrations.txt"),
            test::read_file(dir_b / "registrations.txt"));
}

TEST(RegistrationIO, RoundTrip) {
  const SimResult result = generate(registration_config(48));
  RansacParams params;
  params.seed = 10;
  const Registration original = register_all(result.scene, params, 1);

  const auto dir = test::make_temp_dir("reg_io");
  save_registration(original, dir / "registrations.txt");
  Registration loaded = load_registration(dir / "registrations.txt");
  attach_scene_info(loaded, result.scene);

  ASSERT_EQ(loaded.poses.size(), original.poses.size());
  for (const auto& [key, poses] : original.poses) {
    const auto* other = loaded.find(key.first, key.second);
    ASSERT_NE(other, nullptr);
    ASSERT_EQ(other->size(), poses.size());
    for (size_t i = 0; i < poses.size(); ++i) {
      EXPECT_EQ((*other)[i].inliers, poses[i].inliers);
      EXPECT_EQ((*other)[i].source_take, poses[i].source_take);
      EXPECT_LT(test::pose_distance((*other)[i].pose, poses[i].pose), 1e-12);
    }
  }
}

}  // namespace
}  // namespace tbsfm
