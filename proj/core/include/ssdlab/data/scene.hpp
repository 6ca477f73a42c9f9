#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ssdlab/box.hpp"
#include "ssdlab/image.hpp"

namespace ssdlab::data {

enum class FrequencyProfile { Uniform, LongTail };

/// Instance counts per class of a 12-class weed dataset, used to shape the long-tail profile.
inline constexpr std::array<double, 12> kLongTailCounts{352, 201, 161, 122, 137, 144, 117, 60, 42, 31, 31, 15};

struct SceneSpec {
  std::size_t image_size = 64;
  std::size_t num_classes = 3;
  std::size_t min_instances = 1;
  std::size_t max_instances = 6;
  FrequencyProfile profile = FrequencyProfile::Uniform;
  // Expected distractor strokes per image.
  double clutter_density = 6.0;
  // Object box side range in pixels.
  double min_object_size = 12.0;
  double max_object_size = 26.0;
  // Relative jitter of object colour and shading noise amplitude.
  double color_jitter = 0.25;
  double texture_noise = 0.06;
  // Maximum IoU allowed between two placed objects.
  double max_overlap = 0.2;
  std::uint64_t seed = 0;

  static SceneSpec preset(std::size_t num_classes);
  std::vector<double> class_frequencies() const;
  void validate() const;
};

const std::vector<std::string>& shape_family_names();

struct RenderedInstance {
  Box box;
  std::vector<std::uint8_t> mask;  // image-sized, 1 where the instance was drawn
};

struct Scene {
  Image image;
  BoxList boxes;
  std::vector<RenderedInstance> instances;  // same order as boxes
};

/// Renders one scene: textured background, clutter strokes that belong to no
/// class, then 1..k class shapes with tight boxes.
Scene render_scene(const SceneSpec& spec, Rng& rng);

inline std::pair<Image, BoxList> generate_scene(const SceneSpec& spec, Rng& rng) {
  auto scene = render_scene(spec, rng);
  return {std::move(scene.image), std::move(scene.boxes)};
}

struct Sample {
  int id = 0;
  std::string file_name;
  Image image;
  BoxList boxes;
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<Sample> samples;

  const Sample& by_id(int id) const;
  std::vector<int> ids() const;
  std::array<double, 3> channel_mean() const;
};

/// `count` scenes with ids 1..count; image i uses a seed derived from spec.seed and i.
Dataset generate_dataset(const SceneSpec& spec, std::size_t count);

}  // namespace ssdlab::data
