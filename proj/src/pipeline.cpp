#include "tbsfm/pipeline.hpp"

#include <fstream>
#include <ostream>

#include "tbsfm/text_io.hpp"

namespace tbsfm {
namespace {

namespace fs = std::filesystem;

GroundTruth require_ground_truth(const fs::path& path) {
  const fs::path dir = fs::is_directory(path) ? path : path.parent_path();
  auto gt = load_ground_truth(dir);
  if (!gt.has_value()) {
    throw std::runtime_error("no ground_truth.txt found at " + path.string());
  }
  return *gt;
}

}  // namespace

void stage_simulate(const fs::path& config_path, const fs::path& out_dir, std::ostream& log) {
  const SimConfig config = load_sim_config(config_path);
  SimResult result = generate(config);
  save_scene(result.scene, out_dir);
  save_ground_truth(result.ground_truth, out_dir);
  log << "simulate: " << result.scene.takes.size() << " takes written to " << out_dir.string()
      << "\n";
  for (const std::string& warning : result.warnings) {
    log << "simulate: warning: " << warning << "\n";
  }
}

void stage_register(const fs::path& scene_dir, const fs::path& out_dir,
                    const RansacParams& params, int threads, std::ostream& log) {
  const MultiTakeScene scene = load_scene(scene_dir);
  const Registration registration = register_all(scene, params, threads);
  fs::create_directories(out_dir);
  save_registration(registration, out_dir / "registrations.txt");
  size_t poses = 0;
  for (const auto& [key, list] : registration.poses) {
    poses += list.size();
  }
  log << "register: " << poses << " poses over " << registration.poses.size()
      << " image-take pairs\n";
}

void stage_group(const fs::path& scene_dir, const fs::path& registrations_dir,
                 const fs::path& out_dir, const LinkageOptions& options, double tau,
                 std::ostream& log) {
  const MultiTakeScene scene = load_scene(scene_dir);
  const fs::path reg_path = fs::is_directory(registrations_dir)
                                ? registrations_dir / "registrations.txt"
                                : registrations_dir;
  Registration registration = load_registration(reg_path);
  attach_scene_info(registration, scene);

  const GroupingResult groups = group_all(scene, registration, options);
  fs::create_directories(out_dir);
  save_groups(groups, out_dir / "groups.txt");

  const TrackGraph graph = build_graph(scene, registration, tau);
  const std::vector<Track> tracks = connected_components(graph);
  save_tracks(tracks, out_dir / "tracks.txt");

  log << "group: " << groups.groups.size() << " takes grouped, " << groups.failures.size()
      << " failed; " << tracks.size() << " tracks from " << graph.edges.size() << " edges\n";
}

void stage_segment(const fs::path& scene_dir, const fs::path& groups_dir,
                   const fs::path& tracks_path, const fs::path& out_dir,
                   const SegmentationConfig& config, const LinkageOptions& linkage,
                   std::ostream& log) {
  (void)scene_dir;
  const fs::path groups_path =
      fs::is_directory(groups_dir) ? groups_dir / "groups.txt" : groups_dir;
  const GroupingResult grouping = load_groups(groups_path);
  const fs::path tracks_file =
      fs::is_directory(tracks_path) ? tracks_path / "tracks.txt" : tracks_path;
  const std::vector<Track> tracks = load_tracks(tracks_file);

  fs::create_directories(out_dir);
  if (grouping.groups.empty()) {
    io::LineWriter report(out_dir / "degenerate_report.txt");
    report << "# grouping produced no take with two poses per camera";
    report.end_line();
    for (const auto& [take_id, reason] : grouping.failures) {
      report << "take" << take_id << reason;
      report.end_line();
    }
    // Without pose pairs nothing separates the objects; every track stays
    // unknown (equivalently, the scene is a single rigid body).
    std::map<int, Label> all_unknown;
    for (const Track& track : tracks) {
      all_unknown[track.track_id] = Label::kUnknown;
    }
    save_labels(all_unknown, out_dir / "labels.txt");
    throw StageError("segment",
                     "degenerate grouping: no take produced a pose pair; see degenerate_report.txt");
  }

  const auto membership = track_membership(tracks);
  std::vector<LiftedGroupPair> lifted;
  lifted.reserve(grouping.groups.size());
  for (const TakeGroupPair& group : grouping.groups) {
    lifted.push_back(lift_to_tracks(group, membership));
  }
  const GlobalGroups global = merge_global(lifted, linkage);
  const std::map<int, Label> labels = label_points(global, tracks, config.swap);

  save_labels(labels, out_dir / "labels.txt");
  save_global_groups(global, config, out_dir / "global_groups.txt");
  save_tracks(tracks, out_dir / "tracks.txt");  // rides along for the merge stage

  int labeled = 0;
  for (const auto& [track_id, label] : labels) {
    labeled += label != Label::kUnknown ? 1 : 0;
  }
  // Which side is the background is an assumption; report both sizes so a
  // swap is easy to spot (and to fix with --swap).
  log << "segment: reference take " << global.reference_take << ", group sizes "
      << global.group1.size() << (config.swap ? " (F)" : " (B)") << " / "
      << global.group2.size() << (config.swap ? " (B)" : " (F)") << ", " << labeled << " of "
      << labels.size() << " tracks labeled, " << global.unmerged_takes.size()
      << " takes unmerged\n";
}

void stage_merge(const fs::path& scene_dir, const fs::path& segment_dir, const fs::path& out_dir,
                 const std::optional<fs::path>& registrations_dir, const MergeOptions& options,
                 std::ostream& log) {
  const MultiTakeScene scene = load_scene(scene_dir);
  const auto [global, seg_config] = load_global_groups(segment_dir / "global_groups.txt");
  std::map<int, Label> labels = load_labels(segment_dir / "labels.txt");
  const std::vector<Track> tracks = load_tracks(segment_dir / "tracks.txt");

  std::optional<Registration> registration;
  if (registrations_dir.has_value()) {
    const fs::path reg_path = fs::is_directory(*registrations_dir)
                                  ? *registrations_dir / "registrations.txt"
                                  : *registrations_dir;
    registration = load_registration(reg_path);
    attach_scene_info(*registration, scene);
  }

  LabeledScene merged = merge_scene(scene, global, tracks, labels,
                                    registration.has_value() ? &*registration : nullptr, options);

  // Second labeling step: unanimity k-NN in the shared frame.
  std::map<int, Vec3> positions;
  for (const auto& [track_id, point] : merged.points) {
    positions[track_id] = point.position;
  }
  const auto assigned = knn_propagate(labels, positions, seg_config.knn);
  if (assigned.has_value()) {
    for (auto& [track_id, point] : merged.points) {
      point.label = labels.at(track_id);
    }
    log << "merge: propagation labeled " << *assigned << " tracks\n";
  } else {
    merged.warnings.push_back("propagation skipped: fewer labeled points than k");
  }

  fs::create_directories(out_dir);
  save_merged(merged, out_dir);
  save_labels(labels, out_dir / "labels.txt");  // all tracks, including unmerged
  save_tracks(tracks, out_dir / "tracks.txt");
  for (const std::string& warning : merged.warnings) {
    log << "merge: warning: " << warning << "\n";
  }
  log << "merge: " << merged.points.size() << " points, " << merged.cameras.size()
      << " cameras in the reference frame of take " << merged.reference_take << "\n";
}

void stage_ba(const fs::path& merged_dir, const fs::path& out_dir, const BAOptions& options,
              std::ostream& log) {
  LabeledScene merged = load_merged(merged_dir);
  BAProblem problem(merged, options);
  const BAReport report = problem.solve(options);
  const LabeledScene refined = problem.current_scene();

  fs::create_directories(out_dir);
  save_merged(refined, out_dir);
  // Labels and tracks pass through unchanged.
  save_labels(load_labels(merged_dir / "labels.txt"), out_dir / "labels.txt");
  if (fs::exists(merged_dir / "tracks.txt")) {
    save_tracks(load_tracks(merged_dir / "tracks.txt"), out_dir / "tracks.txt");
  }
  {
    io::LineWriter out(out_dir / "ba_report.txt");
    out << "initial_cost" << report.initial_cost;
    out.end_line();
    out << "final_cost" << report.final_cost;
    out.end_line();
    out << "iterations" << report.iterations;
    out.end_line();
    out << "median_reproj_px" << report.median_reproj_px;
    out.end_line();
    out << "termination" << report.termination;
    out.end_line();
  }
  log << "ba: cost " << io::format_double(report.initial_cost) << " -> "
      << io::format_double(report.final_cost) << " in " << report.iterations
      << " iterations; median " << io::format_double(report.median_reproj_px) << " px ("
      << report.termination << ")\n";
}

void stage_evaluate(const fs::path& result_dir, const fs::path& ground_truth_path,
                    const fs::path& out_json, std::ostream& log) {
  const LabeledScene merged = load_merged(result_dir);
  const std::map<int, Label> labels = load_labels(result_dir / "labels.txt");
  std::vector<Track> tracks;
  const bool have_tracks = fs::exists(result_dir / "tracks.txt");
  if (have_tracks) {
    tracks = load_tracks(result_dir / "tracks.txt");
  }
  const GroundTruth gt = require_ground_truth(ground_truth_path);
  const Report report =
      make_report(merged, labels, have_tracks ? &tracks : nullptr, &gt);
  save_report(report, out_json);
  log << report.to_text();
}

void stage_export_ply(const fs::path& result_dir, const fs::path& out_ply, std::ostream& log) {
  const LabeledScene merged = load_merged(result_dir);
  export_ply(merged, out_ply);
  log << "export-ply: " << merged.points.size() << " vertices written to " << out_ply.string()
      << "\n";
}

void run_pipeline(const fs::path& scene_dir, const fs::path& out_dir,
                  const PipelineOptions& options, std::ostream& log) {
  // Input problems are data errors, not stage failures; surface them before
  // the stage chain starts.
  load_scene(scene_dir);
  fs::create_directories(out_dir);
  const auto wrap = [](const char* stage, auto&& fn) {
    try {
      fn();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& error) {
      throw StageError(stage, error.what());
    }
  };

  wrap("register", [&] {
    stage_register(scene_dir, out_dir, options.ransac, options.threads, log);
  });
  wrap("group", [&] {
    stage_group(scene_dir, out_dir, out_dir / "grouping", options.linkage, options.ransac.tau,
                log);
  });
  wrap("segment", [&] {
    stage_segment(scene_dir, out_dir / "grouping", out_dir / "grouping",
                  out_dir / "segmentation", options.segmentation, options.linkage, log);
  });
  wrap("merge", [&] {
    stage_merge(scene_dir, out_dir / "segmentation", out_dir / "merged", out_dir, options.merge,
                log);
  });
  wrap("ba", [&] { stage_ba(out_dir / "merged", out_dir / "ba", options.ba, log); });

  // Evaluate when the scene ships ground truth; report counts only otherwise.
  const LabeledScene final_scene = load_merged(out_dir / "ba");
  const std::map<int, Label> labels = load_labels(out_dir / "ba" / "labels.txt");
  const std::vector<Track> tracks = load_tracks(out_dir / "ba" / "tracks.txt");
  const auto gt = load_ground_truth(scene_dir);
  const Report report =
      make_report(final_scene, labels, &tracks, gt.has_value() ? &*gt : nullptr);
  save_report(report, out_dir / "report.json");
  std::ofstream text(out_dir / "report.txt");
  text << report.to_text();
  log << report.to_text();
}

}  // namespace tbsfm
