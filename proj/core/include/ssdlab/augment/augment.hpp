#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "ssdlab/box.hpp"
#include "ssdlab/image.hpp"

namespace ssdlab::augment {

struct AugPolicy {
  double flip_prob = 0.5;
  // Target short side is drawn from [min, max] in multiples of `short_side_step`.
  std::size_t short_side_min = 48;
  std::size_t short_side_max = 96;
  std::size_t short_side_step = 8;

  double grayscale_prob = 0.2;
  double blur_prob = 0.5;
  double blur_sigma_min = 0.5;
  double blur_sigma_max = 1.5;
  double cutout_prob = 0.7;
  std::size_t cutout_count_min = 1;
  std::size_t cutout_count_max = 2;
  // Cutout side as a fraction of the image short side.
  double cutout_size_min = 0.10;
  double cutout_size_max = 0.25;
  double jitter_prob = 0.8;
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  std::array<double, 3> fill{0.5, 0.5, 0.5};

  void validate() const;
  // Every photometric op disabled.
  static AugPolicy identity();
};

/// Flip and rescale applied to a source image; maps boxes both ways exactly.
struct Geometry {
  bool flipped = false;
  double scale_x = 1.0;
  double scale_y = 1.0;
  std::size_t source_width = 0;
  std::size_t source_height = 0;
  std::size_t width = 0;
  std::size_t height = 0;

  Box forward(const Box& box) const;
  Box inverse(const Box& box) const;
};

struct WeakResult {
  Image view;
  BoxList boxes;
  Geometry geometry;
  std::size_t dropped = 0;  // boxes that became degenerate after resizing
};

/// Picks the short side of the resized view from the policy range.
std::size_t sample_short_side(const AugPolicy& policy, Rng& rng);

/// Deterministic part of the weak pipeline: optional horizontal flip, then a
/// bilinear resize so the short side equals `short_side` (the long side is
/// rounded to a multiple of `side_multiple`).
WeakResult weak_transform(const Image& image, const BoxList& boxes, bool flip, std::size_t short_side,
                          std::size_t side_multiple = 8);

/// Random flip + random short side from the policy.
WeakResult weak_augment(const Image& image, const BoxList& boxes, const AugPolicy& policy, Rng& rng);

/// Photometric only (colour jitter, grayscale, Gaussian blur, cutout); the
/// output has the input's dimensions, so weak-view boxes stay valid.
Image strong_augment(const Image& weak_view, const AugPolicy& policy, Rng& rng);

// Individual photometric ops, exposed for testing.
Image to_grayscale(const Image& image);
Image gaussian_blur(const Image& image, double sigma);
void apply_cutout(Image& image, std::size_t x0, std::size_t y0, std::size_t side, const std::array<double, 3>& fill);
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);

struct ViewPair {
  Image weak_view;
  Image strong_view;
  Geometry geometry;
  int source_id = 0;
};

}  // namespace ssdlab::augment
