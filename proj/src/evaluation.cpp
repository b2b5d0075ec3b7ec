#include "tbsfm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tbsfm/text_io.hpp"

namespace tbsfm {

std::map<std::pair<int, int>, Label> per_point_labels(const std::vector<Track>& tracks,
                                                      const std::map<int, Label>& track_labels) {
  std::map<std::pair<int, int>, Label> labels;
  for (const Track& track : tracks) {
    const auto it = track_labels.find(track.track_id);
    const Label label = it == track_labels.end() ? Label::kUnknown : it->second;
    for (const auto& member : track.members) {
      labels[member] = label;
    }
  }
  return labels;
}

SegmentationScore segmentation_accuracy(const std::map<std::pair<int, int>, Label>& estimated,
                                        const GroundTruth& gt) {
  int total = 0;
  int labeled = 0;
  int match_direct = 0;
  int match_swapped = 0;
  for (const auto& [key, truth] : gt.labels) {
    ++total;
    const auto it = estimated.find(key);
    const Label label = it == estimated.end() ? Label::kUnknown : it->second;
    if (label == Label::kUnknown) {
      continue;
    }
    ++labeled;
    match_direct += label == truth ? 1 : 0;
    match_swapped += swap_label(label) == truth ? 1 : 0;
  }
  SegmentationScore score;
  score.coverage = total > 0 ? static_cast<double>(labeled) / static_cast<double>(total) : 0.0;
  if (labeled > 0) {
    score.swapped = match_swapped > match_direct;
    score.accuracy = static_cast<double>(std::max(match_direct, match_swapped)) /
                     static_cast<double>(labeled);
  }
  return score;
}

std::map<int, MotionError> motion_error(const LabeledScene& merged,
                                        const GroundTruth& gt,
                                        bool swapped) {
  const double diameter = std::max(merged.scene_diameter(), 1e-12);
  const SimilarityTransform gauge = gt.take_from_world(merged.reference_take);
  const RigidMotion to_reference = gt.motion(merged.reference_take);

  std::map<int, MotionError> errors;
  for (const auto& [take_id, estimated] : merged.foreground_motions) {
    if (gt.motions.find(take_id) == gt.motions.end()) {
      continue;
    }
    // World-frame motion from the reference configuration to this take,
    // expressed in the reference take's reconstruction frame.
    const RigidMotion world = compose_motion(to_reference, gt.motion(take_id));
    const RigidMotion expected = motion_in_frame(world, gauge);
    const RigidMotion compared = swapped ? invert_motion(estimated) : estimated;
    errors[take_id] = {
        rotation_geodesic_distance(compared.rotation, expected.rotation),
        (compared.translation - expected.translation).norm() / diameter,
    };
  }
  return errors;
}

Report make_report(const LabeledScene& merged,
                   const std::map<int, Label>& all_track_labels,
                   const std::vector<Track>* tracks,
                   const GroundTruth* gt) {
  Report report;
  for (const auto& [track_id, label] : all_track_labels) {
    switch (label) {
      case Label::kBackground: ++report.points_background; break;
      case Label::kForeground: ++report.points_foreground; break;
      case Label::kUnknown: ++report.points_unknown; break;
    }
  }
  report.cameras = static_cast<int>(merged.cameras.size());

  // Median reprojection over labeled observations, through the pose matching
  // the label.
  std::vector<double> norms;
  for (const MergedObservation& obs : merged.observations) {
    const auto point = merged.points.find(obs.track_id);
    if (point == merged.points.end() || point->second.label == Label::kUnknown) {
      continue;
    }
    const MergedCamera& camera = merged.cameras[static_cast<size_t>(obs.camera_index)];
    const CameraPose& pose = point->second.label == Label::kForeground ? camera.foreground_pose
                                                                       : camera.background_pose;
    const auto reproj = try_project(pose, point->second.position);
    if (reproj.has_value()) {
      norms.push_back((*reproj - obs.pixel).norm());
    }
  }
  if (!norms.empty()) {
    const size_t mid = norms.size() / 2;
    std::nth_element(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(mid), norms.end());
    report.median_reproj_px = norms[mid];
    if (norms.size() % 2 == 0) {
      const auto lower =
          std::max_element(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(mid));
      report.median_reproj_px = 0.5 * (report.median_reproj_px + *lower);
    }
  }

  if (gt != nullptr && tracks != nullptr) {
    report.segmentation = segmentation_accuracy(per_point_labels(*tracks, all_track_labels), *gt);
    report.motion_errors = motion_error(merged, *gt, report.segmentation->swapped);
  }
  return report;
}

std::string Report::to_json() const {
  nlohmann::json j;
  j["points_F"] = points_foreground;
  j["points_B"] = points_background;
  j["points_U"] = points_unknown;
  j["median_reproj_px"] = median_reproj_px;
  j["cameras"] = cameras;
  if (segmentation.has_value()) {
    j["segmentation"] = {{"accuracy", segmentation->accuracy},
                         {"swapped", segmentation->swapped},
                         {"coverage", segmentation->coverage}};
    nlohmann::json motions = nlohmann::json::object();
    for (const auto& [take_id, error] : motion_errors) {
      motions[std::to_string(take_id)] = {{"rotation_rad", error.rotation_rad},
                                          {"translation_relative", error.translation_relative}};
    }
    j["motion_errors"] = motions;
  }
  return j.dump(2) + "\n";
}

std::string Report::to_text() const {
  char buffer[128];
  std::string out;
  const auto line = [&](const char* format, auto... args) {
    std::snprintf(buffer, sizeof(buffer), format, args...);
    out += buffer;
    out += '\n';
  };
  line("points_F          %d", points_foreground);
  line("points_B          %d", points_background);
  line("points_U          %d", points_unknown);
  line("median_reproj_px  %.3f", median_reproj_px);
  line("cameras           %d", cameras);
  if (segmentation.has_value()) {
    line("seg_accuracy      %.4f", segmentation->accuracy);
    line("seg_swapped       %s", segmentation->swapped ? "yes" : "no");
    line("seg_coverage      %.4f", segmentation->coverage);
    for (const auto& [take_id, error] : motion_errors) {
      line("motion_take_%d     rot %.6f rad, trans %.6f rel", take_id, error.rotation_rad,
           error.translation_relative);
    }
  }
  return out;
}

void save_report(const Report& report, const std::filesystem::path& json_path) {
  std::ofstream out(json_path);
  if (!out) {
    throw std::runtime_error("cannot write report to " + json_path.string());
  }
  out << report.to_json();
}

void export_ply(const LabeledScene& merged, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write PLY to " + path.string());
  }
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << merged.points.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  for (const auto& [track_id, point] : merged.points) {
    int r = 128, g = 128, b = 128;
    if (point.label == Label::kForeground) {
      r = 0;
      g = 255;
      b = 0;
    } else if (point.label == Label::kBackground) {
      r = 255;
      g = 0;
      b = 0;
    }
    out << io::format_double(point.position.x()) << ' ' << io::format_double(point.position.y())
        << ' ' << io::format_double(point.position.z()) << ' ' << r << ' ' << g << ' ' << b
        << '\n';
  }
}

}  // namespace tbsfm
