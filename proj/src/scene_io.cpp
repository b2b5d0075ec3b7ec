#include <algorithm>
#include <set>

#include "tbsfm/scene.hpp"
#include "tbsfm/text_io.hpp"

namespace tbsfm {
namespace {

namespace fs = std::filesystem;

TakeModel load_take(const fs::path& dir, int take_id) {
  TakeModel take;
  take.take_id = take_id;

  io::TokenFile cameras(dir / "cameras.txt");
  while (cameras.next_line()) {
    if (cameras.tag() != "CAM") {
      cameras.fail("expected CAM line");
    }
    cameras.expect_size(6);
    const int cam_id = cameras.int_at(1);
    Intrinsics k{cameras.double_at(2), cameras.double_at(3), cameras.double_at(4),
                 cameras.double_at(5)};
    if (!(k.fx > 0.0) || !(k.fy > 0.0)) {
      cameras.fail("focal lengths must be positive");
    }
    if (!take.cameras.emplace(cam_id, k).second) {
      cameras.fail("duplicate camera id " + std::to_string(cam_id));
    }
  }

  io::TokenFile points(dir / "points.txt");
  while (points.next_line()) {
    if (points.tag() != "PT") {
      points.fail("expected PT line");
    }
    points.expect_size(5);
    const int point_id = points.int_at(1);
    if (!take.points.emplace(point_id, io::read_vec3(points, 2)).second) {
      points.fail("duplicate point id " + std::to_string(point_id));
    }
  }

  io::TokenFile images(dir / "images.txt");
  while (images.next_line()) {
    if (images.tag() == "IMG") {
      images.expect_size(10);
      TakeImage image;
      image.image_id = images.int_at(1);
      image.camera_id = images.int_at(2);
      image.rotation = io::read_quat(images, 3);
      image.center = io::read_vec3(images, 7);
      if (take.cameras.find(image.camera_id) == take.cameras.end()) {
        images.fail("image references unknown camera id " + std::to_string(image.camera_id));
      }
      try {
        image.rotation.rotation();
      } catch (const std::exception& error) {
        images.fail(error.what());
      }
      take.images.push_back(std::move(image));
    } else if (images.tag() == "OBS") {
      if (take.images.empty()) {
        images.fail("OBS line before any IMG line");
      }
      images.expect_min_size(4);
      Observation obs;
      obs.pixel = {images.double_at(1), images.double_at(2)};
      const int n = images.int_at(3);
      images.expect_size(4 + 2 * static_cast<size_t>(n));
      std::set<int> seen_takes;
      for (int i = 0; i < n; ++i) {
        const int link_take = images.int_at(4 + 2 * static_cast<size_t>(i));
        const int link_point = images.int_at(5 + 2 * static_cast<size_t>(i));
        if (!seen_takes.insert(link_take).second) {
          images.fail("duplicate take id " + std::to_string(link_take) + " in links");
        }
        obs.links.emplace_back(link_take, link_point);
      }
      take.images.back().observations.push_back(std::move(obs));
    } else {
      images.fail("expected IMG or OBS line");
    }
  }

  std::sort(take.images.begin(), take.images.end(),
            [](const TakeImage& a, const TakeImage& b) { return a.image_id < b.image_id; });
  if (take.images.size() < 2) {
    throw std::runtime_error(dir.string() + ": take " + std::to_string(take_id) +
                             " has fewer than 2 images");
  }
  return take;
}

void check_referential_integrity(const MultiTakeScene& scene) {
  std::set<int> image_ids;
  for (const TakeModel& take : scene.takes) {
    for (const TakeImage& image : take.images) {
      if (!image_ids.insert(image.image_id).second) {
        throw std::runtime_error("image id " + std::to_string(image.image_id) +
                                 " is not unique across takes");
      }
    }
  }
  for (const TakeModel& take : scene.takes) {
    for (const TakeImage& image : take.images) {
      for (const Observation& obs : image.observations) {
        for (const auto& [link_take, link_point] : obs.links) {
          const TakeModel* target = scene.find_take(link_take);
          if (target == nullptr) {
            throw std::runtime_error("dangling link: take " + std::to_string(link_take) +
                                     " does not exist (image " + std::to_string(image.image_id) +
                                     ")");
          }
          if (target->points.find(link_point) == target->points.end()) {
            throw std::runtime_error("dangling link: point " + std::to_string(link_point) +
                                     " does not exist in take " + std::to_string(link_take) +
                                     " (image " + std::to_string(image.image_id) + ")");
          }
        }
      }
    }
  }
}

}  // namespace

MultiTakeScene load_scene(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("scene directory not found: " + dir.string());
  }
  std::vector<std::pair<int, fs::path>> take_dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) {
      continue;
    }
    const std::string name = entry.path().filename().string();
    if (name.rfind("take_", 0) == 0) {
      try {
        take_dirs.emplace_back(std::stoi(name.substr(5)), entry.path());
      } catch (const std::exception&) {
        throw std::runtime_error("malformed take directory name: " + name);
      }
    }
  }
  if (take_dirs.empty()) {
    throw std::runtime_error("no takes found in " + dir.string());
  }
  std::sort(take_dirs.begin(), take_dirs.end());

  MultiTakeScene scene;
  for (const auto& [take_id, take_dir] : take_dirs) {
    scene.takes.push_back(load_take(take_dir, take_id));
  }
  check_referential_integrity(scene);
  return scene;
}

void save_scene(const MultiTakeScene& scene, const fs::path& dir) {
  fs::create_directories(dir);
  for (const TakeModel& take : scene.takes) {
    const fs::path take_dir = dir / ("take_" + std::to_string(take.take_id));
    fs::create_directories(take_dir);

    io::LineWriter cameras(take_dir / "cameras.txt");
    for (const auto& [cam_id, k] : take.cameras) {
      cameras << "CAM" << cam_id << k.fx << k.fy << k.cx << k.cy;
      cameras.end_line();
    }

    io::LineWriter points(take_dir / "points.txt");
    for (const auto& [point_id, pos] : take.points) {
      points << "PT" << point_id;
      io::write_vec3(points, pos);
      points.end_line();
    }

    io::LineWriter images(take_dir / "images.txt");
    for (const TakeImage& image : take.images) {
      images << "IMG" << image.image_id << image.camera_id;
      io::write_quat(images, image.rotation);
      io::write_vec3(images, image.center);
      images.end_line();
      for (const Observation& obs : image.observations) {
        images << "OBS" << obs.pixel.x() << obs.pixel.y()
               << static_cast<int>(obs.links.size());
        for (const auto& [link_take, link_point] : obs.links) {
          images << link_take << link_point;
        }
        images.end_line();
      }
    }
  }
}

std::optional<GroundTruth> load_ground_truth(const fs::path& dir) {
  const fs::path path = dir / "ground_truth.txt";
  if (!fs::exists(path)) {
    return std::nullopt;
  }
  GroundTruth gt;
  io::TokenFile file(path);
  while (file.next_line()) {
    if (file.tag() == "GTL") {
      file.expect_size(4);
      const std::string& code = file.str_at(3);
      if (code.size() != 1) {
        file.fail("expected single-character label");
      }
      gt.labels[{file.int_at(1), file.int_at(2)}] = label_from_code(code[0]);
    } else if (file.tag() == "GTM") {
      file.expect_size(9);
      gt.motions[file.int_at(1)] = {io::read_quat(file, 2), io::read_vec3(file, 6)};
    } else if (file.tag() == "GTS") {
      file.expect_size(10);
      gt.take_to_world[file.int_at(1)] = {io::read_quat(file, 2), io::read_vec3(file, 6),
                                          file.double_at(9)};
    } else {
      file.fail("expected GTL, GTM or GTS line");
    }
  }
  return gt;
}

void save_ground_truth(const GroundTruth& gt, const fs::path& dir) {
  fs::create_directories(dir);
  io::LineWriter out(dir / "ground_truth.txt");
  for (const auto& [key, label] : gt.labels) {
    out << "GTL" << key.first << key.second << std::string(1, label_code(label));
    out.end_line();
  }
  for (const auto& [take_id, motion] : gt.motions) {
    out << "GTM" << take_id;
    io::write_quat(out, motion.rotation);
    io::write_vec3(out, motion.translation);
    out.end_line();
  }
  for (const auto& [take_id, sim] : gt.take_to_world) {
    out << "GTS" << take_id;
    io::write_quat(out, sim.rotation);
    io::write_vec3(out, sim.translation);
    out << sim.scale;
    out.end_line();
  }
}

}  // namespace tbsfm
