#include "tbsfm/scene.hpp"

#include <algorithm>

namespace tbsfm {

QuatRotation QuatRotation::from_rotation(const Rotation3& r) {
  const Eigen::Quaterniond q = r.quaternion();
  return {q.w(), q.x(), q.y(), q.z()};
}

Rotation3 QuatRotation::rotation() const {
  return Rotation3::from_quaternion(w, x, y, z);
}

CameraPose TakeModel::pose(const TakeImage& image) const {
  const auto it = cameras.find(image.camera_id);
  if (it == cameras.end()) {
    throw std::out_of_range("unknown camera id " + std::to_string(image.camera_id));
  }
  return {it->second, image.rotation.rotation(), image.center};
}

const TakeImage* TakeModel::find_image(int image_id) const {
  for (const TakeImage& image : images) {
    if (image.image_id == image_id) {
      return &image;
    }
  }
  return nullptr;
}

const TakeModel* MultiTakeScene::find_take(int take_id) const {
  for (const TakeModel& t : takes) {
    if (t.take_id == take_id) {
      return &t;
    }
  }
  return nullptr;
}

const TakeModel& MultiTakeScene::take(int take_id) const {
  const TakeModel* t = find_take(take_id);
  if (t == nullptr) {
    throw std::out_of_range("unknown take id " + std::to_string(take_id));
  }
  return *t;
}

std::pair<const TakeModel*, const TakeImage*> MultiTakeScene::find_image(int image_id) const {
  for (const TakeModel& t : takes) {
    if (const TakeImage* image = t.find_image(image_id)) {
      return {&t, image};
    }
  }
  return {nullptr, nullptr};
}

int MultiTakeScene::image_count() const {
  int n = 0;
  for (const TakeModel& t : takes) {
    n += static_cast<int>(t.images.size());
  }
  return n;
}

char label_code(Label label) {
  switch (label) {
    case Label::kBackground: return 'B';
    case Label::kForeground: return 'F';
    case Label::kUnknown: return 'U';
  }
  return 'U';
}

Label label_from_code(char code) {
  switch (code) {
    case 'B': return Label::kBackground;
    case 'F': return Label::kForeground;
    case 'U': return Label::kUnknown;
    default: throw std::invalid_argument(std::string("unknown label code '") + code + "'");
  }
}

Label swap_label(Label label) {
  switch (label) {
    case Label::kBackground: return Label::kForeground;
    case Label::kForeground: return Label::kBackground;
    case Label::kUnknown: return Label::kUnknown;
  }
  return Label::kUnknown;
}

RigidMotion GroundTruth::motion(int take_id) const {
  const auto it = motions.find(take_id);
  if (it == motions.end()) {
    throw std::out_of_range("no ground-truth motion for take " + std::to_string(take_id));
  }
  return {it->second.rotation.rotation(), it->second.translation};
}

SimilarityTransform GroundTruth::world_from_take(int take_id) const {
  const auto it = take_to_world.find(take_id);
  if (it == take_to_world.end()) {
    throw std::out_of_range("no ground-truth similarity for take " + std::to_string(take_id));
  }
  return {it->second.rotation.rotation(), it->second.translation, it->second.scale};
}

SimilarityTransform GroundTruth::take_from_world(int take_id) const {
  return invert_similarity(world_from_take(take_id));
}

std::vector<ImageCorrespondence> correspondences(const MultiTakeScene& scene,
                                                 int image_id,
                                                 int target_take) {
  const auto [take, image] = scene.find_image(image_id);
  if (image == nullptr) {
    throw std::out_of_range("unknown image id " + std::to_string(image_id));
  }
  std::vector<ImageCorrespondence> result;
  for (size_t i = 0; i < image->observations.size(); ++i) {
    const Observation& obs = image->observations[i];
    for (const auto& [link_take, point_id] : obs.links) {
      if (link_take == target_take) {
        result.push_back({obs.pixel, point_id, static_cast<int>(i)});
        break;  // take ids are unique within the links
      }
    }
  }
  return result;
}

}  // namespace tbsfm
