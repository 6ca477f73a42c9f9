#include "ssdlab/data/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace ssdlab::data {

namespace {

constexpr double kPi = std::numbers::pi;

using InsideFn = bool (*)(double u, double v);

bool inside_disc(double u, double v) { return u * u + v * v <= 1.0; }
bool inside_ring(double u, double v) {
  const double r2 = u * u + v * v;
  return r2 <= 1.0 && r2 >= 0.36;
}
bool inside_cross(double u, double v) {
  return (std::abs(u) <= 0.3 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.3 && std::abs(u) <= 1.0);
}
bool inside_triangle(double u, double v) {
  // Vertices (0,-1), (0.866,0.5), (-0.866,0.5).
  auto edge = [](double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
  };
  const double e1 = edge(0, -1, 0.866, 0.5, u, v);
  const double e2 = edge(0.866, 0.5, -0.866, 0.5, u, v);
  const double e3 = edge(-0.866, 0.5, 0, -1, u, v);
  return (e1 >= 0 && e2 >= 0 && e3 >= 0) || (e1 <= 0 && e2 <= 0 && e3 <= 0);
}
bool inside_bar(double u, double v) { return std::abs(u) <= 1.0 && std::abs(v) <= 0.45; }
bool inside_star(double u, double v) {
  const double r = std::sqrt(u * u + v * v);
  double t = std::atan2(v, u) * 5.0 / (2.0 * kPi);
  t -= std::floor(t);
  const double reach = 0.42 + 0.58 * std::abs(1.0 - 2.0 * t);
  return r <= reach;
}
bool inside_frame(double u, double v) {
  const double m = std::max(std::abs(u), std::abs(v));
  return m <= 1.0 && m >= 0.55;
}
bool inside_diamond(double u, double v) { return std::abs(u) + std::abs(v) <= 1.0; }
bool inside_crescent(double u, double v) {
  return u * u + v * v <= 1.0 && (u - 0.45) * (u - 0.45) + v * v >= 0.5625;
}
bool inside_hexagon(double u, double v) {
  const double s3 = std::sqrt(3.0);
  return std::abs(v) <= s3 / 2.0 && s3 * std::abs(u) + std::abs(v) <= s3;
}
bool inside_half_disc(double u, double v) { return u * u + v * v <= 1.0 && v >= -0.05; }
bool inside_l_shape(double u, double v) {
  return std::abs(u) <= 1.0 && std::abs(v) <= 1.0 && !(u > -0.35 && v < 0.35);
}

constexpr InsideFn kFamilies[12] = {inside_disc,    inside_ring,    inside_cross,    inside_triangle,
                                    inside_bar,     inside_star,    inside_frame,    inside_diamond,
                                    inside_crescent, inside_hexagon, inside_half_disc, inside_l_shape};

struct Rgb {
  double r, g, b;
};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void paint(Image& img, std::size_t x, std::size_t y, const Rgb& c) {
  img.at(0, y, x) = clamp01(c.r);
  img.at(1, y, x) = clamp01(c.g);
  img.at(2, y, x) = clamp01(c.b);
}

void render_background(Image& img, const SceneSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Rgb soil{0.42 + 0.1 * (unit(rng) - 0.5), 0.33 + 0.1 * (unit(rng) - 0.5), 0.24 + 0.08 * (unit(rng) - 0.5)};
  if (spec.clutter_density <= 0) {
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) paint(img, x, y, soil);
    }
    return;
  }
  // Low-frequency variation from a few random plane waves.
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::vector<Wave> waves(3);
  for (auto& w : waves) {
    const double angle = unit(rng) * 2 * kPi;
    const double freq = (0.5 + 2.5 * unit(rng)) * 2 * kPi / static_cast<double>(spec.image_size);
    w = {freq * std::cos(angle), freq * std::sin(angle), unit(rng) * 2 * kPi, 0.04 + 0.05 * unit(rng)};
  }
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      double shade = 0.0;
      for (const auto& w : waves) shade += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
      const double noise = spec.texture_noise * (unit(rng) - 0.5) * 2.0;
      paint(img, x, y, {soil.r + shade + noise, soil.g + shade + noise, soil.b + shade + noise});
    }
  }
}

Rgb plant_color(const SceneSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double j = spec.color_jitter;
  return {0.25 * (1 + j * unit(rng)), 0.55 * (1 + j * unit(rng)), 0.2 * (1 + j * unit(rng))};
}

void render_clutter(Image& img, const SceneSpec& spec, Rng& rng) {
  if (spec.clutter_density <= 0) return;
  std::poisson_distribution<int> count_dist(spec.clutter_density);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int count = count_dist(rng);
  const double size = static_cast<double>(spec.image_size);
  for (int k = 0; k < count; ++k) {
    const bool green = unit(rng) < 0.5;
    Rgb color = green ? plant_color(spec, rng) : Rgb{0.2 + 0.2 * unit(rng), 0.16 + 0.15 * unit(rng), 0.1 + 0.1 * unit(rng)};
    if (unit(rng) < 0.6) {
      // Thin stroke: grass blade or twig.
      const double x0 = unit(rng) * size, y0 = unit(rng) * size;
      const double angle = unit(rng) * 2 * kPi;
      const double length = 6.0 + 14.0 * unit(rng);
      const double half_thickness = 0.5 + 0.4 * unit(rng);
      const double dx = std::cos(angle), dy = std::sin(angle);
      for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
          const double px = x + 0.5 - x0, py = y + 0.5 - y0;
          const double along = px * dx + py * dy;
          const double across = -px * dy + py * dx;
          if (along >= 0 && along <= length && std::abs(across) <= half_thickness) paint(img, x, y, color);
        }
      }
    } else {
      // Small pebble or speck, well below the object size range.
      const double cx = unit(rng) * size, cy = unit(rng) * size;
      const double radius = 1.0 + 2.0 * unit(rng);
      for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
          const double px = x + 0.5 - cx, py = y + 0.5 - cy;
          if (px * px + py * py <= radius * radius) paint(img, x, y, color);
        }
      }
    }
  }
}

struct Placement {
  std::vector<std::uint8_t> mask;
  Box box;
};

std::optional<Placement> place_shape(const SceneSpec& spec, int family, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double size = static_cast<double>(spec.image_size);
  const double extent = spec.min_object_size + (spec.max_object_size - spec.min_object_size) * unit(rng);
  const double aspect = std::exp((unit(rng) - 0.5) * 0.4);
  const double angle = unit(rng) * 2 * kPi;
  const double half_u = extent / 2.0 * aspect, half_v = extent / 2.0 / aspect;
  const double margin = extent / 2.0;
  const double cx = margin + unit(rng) * std::max(size - 2 * margin, 1.0);
  const double cy = margin + unit(rng) * std::max(size - 2 * margin, 1.0);
  const double c = std::cos(angle), s = std::sin(angle);

  Placement p;
  p.mask.assign(spec.image_size * spec.image_size, 0);
  std::size_t min_x = spec.image_size, min_y = spec.image_size, max_x = 0, max_y = 0;
  bool any = false;
  for (std::size_t y = 0; y < spec.image_size; ++y) {
    for (std::size_t x = 0; x < spec.image_size; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double u = (dx * c + dy * s) / half_u;
      const double v = (-dx * s + dy * c) / half_v;
      if (!kFamilies[family](u, v)) continue;
      p.mask[y * spec.image_size + x] = 1;
      min_x = std::min(min_x, x);
      min_y = std::min(min_y, y);
      max_x = std::max(max_x, x);
      max_y = std::max(max_y, y);
      any = true;
    }
  }
  if (!any) return std::nullopt;
  p.box = Box{static_cast<double>(min_x), static_cast<double>(min_y), static_cast<double>(max_x + 1),
              static_cast<double>(max_y + 1), family, std::nullopt};
  // Every object must cover at least one stride-8 location centre.
  if (p.box.width() < 10.0 || p.box.height() < 10.0) return std::nullopt;
  return p;
}

int sample_class(const std::vector<double>& cumulative, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double r = unit(rng);
  for (std::size_t c = 0; c < cumulative.size(); ++c) {
    if (r < cumulative[c]) return static_cast<int>(c);
  }
  return static_cast<int>(cumulative.size() - 1);
}

}  // namespace

SceneSpec SceneSpec::preset(std::size_t num_classes) {
  SceneSpec spec;
  spec.num_classes = num_classes;
  if (num_classes == 12) spec.profile = FrequencyProfile::LongTail;
  return spec;
}

std::vector<double> SceneSpec::class_frequencies() const {
  std::vector<double> freq(num_classes, 1.0);
  if (profile == FrequencyProfile::LongTail) {
    for (std::size_t c = 0; c < num_classes; ++c) freq[c] = kLongTailCounts[c % kLongTailCounts.size()];
  }
  const double total = std::accumulate(freq.begin(), freq.end(), 0.0);
  for (auto& f : freq) f /= total;
  return freq;
}

void SceneSpec::validate() const {
  if (num_classes == 0 || num_classes > 12) throw std::invalid_argument("scene: class count must be in 1..12");
  if (image_size < 16 || image_size % 8 != 0) throw std::invalid_argument("scene: image size must be a multiple of 8, >= 16");
  if (min_instances == 0 || min_instances > max_instances) throw std::invalid_argument("scene: bad instance range");
  if (!(min_object_size >= 10 && min_object_size <= max_object_size && max_object_size < image_size)) {
    throw std::invalid_argument("scene: bad object size range");
  }
  if (clutter_density < 0 || color_jitter < 0 || texture_noise < 0) throw std::invalid_argument("scene: negative jitter");
}

const std::vector<std::string>& shape_family_names() {
  static const std::vector<std::string> names{"disc",     "ring",    "cross",    "triangle", "bar",      "star",
                                              "frame",    "diamond", "crescent", "hexagon",  "half_disc", "l_shape"};
  return names;
}

Scene render_scene(const SceneSpec& spec, Rng& rng) {
  spec.validate();
  Scene scene;
  scene.image = Image(spec.image_size, spec.image_size);
  render_background(scene.image, spec, rng);
  render_clutter(scene.image, spec, rng);

  const auto freq = spec.class_frequencies();
  std::vector<double> cumulative(freq.size());
  std::partial_sum(freq.begin(), freq.end(), cumulative.begin());
  std::uniform_int_distribution<std::size_t> count_dist(spec.min_instances, spec.max_instances);
  const std::size_t count = count_dist(rng);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  for (std::size_t k = 0; k < count; ++k) {
    const int family = sample_class(cumulative, rng);
    std::optional<Placement> chosen;
    for (int attempt = 0; attempt < 400 && !chosen; ++attempt) {
      auto candidate = place_shape(spec, family, rng);
      if (!candidate) continue;
      // Overlap limit is relaxed after many failures so the count is always met.
      const double limit = attempt < 300 ? spec.max_overlap : 1.0;
      bool ok = true;
      for (const auto& b : scene.boxes) ok = ok && iou(b, candidate->box) <= limit;
      if (ok) chosen = std::move(candidate);
    }
    if (!chosen) throw std::runtime_error("scene: could not place an object");
    const Rgb base = plant_color(spec, rng);
    for (std::size_t y = 0; y < spec.image_size; ++y) {
      for (std::size_t x = 0; x < spec.image_size; ++x) {
        if (!chosen->mask[y * spec.image_size + x]) continue;
        const double n = 1.0 + spec.texture_noise * unit(rng);
        paint(scene.image, x, y, {base.r * n, base.g * n, base.b * n});
      }
    }
    scene.boxes.push_back(chosen->box);
    scene.instances.push_back({chosen->box, std::move(chosen->mask)});
  }
  return scene;
}

const Sample& Dataset::by_id(int id) const {
  for (const auto& s : samples) {
    if (s.id == id) return s;
  }
  throw std::out_of_range("dataset has no image with id " + std::to_string(id));
}

std::vector<int> Dataset::ids() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.id);
  return out;
}

std::array<double, 3> Dataset::channel_mean() const {
  std::array<double, 3> sum{0, 0, 0};
  double count = 0;
  for (const auto& s : samples) {
    const std::size_t plane = s.image.plane();
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < plane; ++i) sum[c] += s.image.pixels[c * plane + i];
    }
    count += static_cast<double>(plane);
  }
  if (count > 0) {
    for (auto& v : sum) v /= count;
  }
  return sum;
}

Dataset generate_dataset(const SceneSpec& spec, std::size_t count) {
  spec.validate();
  Dataset ds;
  const auto& names = shape_family_names();
  ds.class_names.assign(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(spec.num_classes));
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(spec.seed, i));
    auto scene = render_scene(spec, rng);
    Sample s;
    s.id = static_cast<int>(i + 1);
    s.file_name = "images/" + std::to_string(s.id) + ".png";
    s.image = std::move(scene.image);
    s.boxes = std::move(scene.boxes);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace ssdlab::data
