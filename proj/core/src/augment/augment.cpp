#include "ssdlab/augment/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssdlab::augment {

namespace {

bool coin(double prob, Rng& rng) {
  if (prob <= 0) return false;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return unit(rng) < prob;
}

double uniform(double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return lo == hi ? lo : dist(rng);
}

void check_prob(double p, const char* name) {
  if (!(p >= 0 && p <= 1)) throw std::invalid_argument(std::string("augment policy: ") + name + " must lie in [0,1]");
}

}  // namespace

void AugPolicy::validate() const {
  check_prob(flip_prob, "flip_prob");
  check_prob(grayscale_prob, "grayscale_prob");
  check_prob(blur_prob, "blur_prob");
  check_prob(cutout_prob, "cutout_prob");
  check_prob(jitter_prob, "jitter_prob");
  if (short_side_step == 0 || short_side_min == 0 || short_side_min > short_side_max) {
    throw std::invalid_argument("augment policy: bad short side range");
  }
  if (!(blur_sigma_min > 0 && blur_sigma_min <= blur_sigma_max)) throw std::invalid_argument("augment policy: bad blur sigma range");
  if (cutout_count_min > cutout_count_max) throw std::invalid_argument("augment policy: bad cutout count range");
  if (!(cutout_size_min > 0 && cutout_size_min <= cutout_size_max && cutout_size_max <= 1)) {
    throw std::invalid_argument("augment policy: bad cutout size range");
  }
  if (brightness < 0 || contrast < 0 || saturation < 0) throw std::invalid_argument("augment policy: negative jitter");
}

AugPolicy AugPolicy::identity() {
  AugPolicy p;
  p.flip_prob = 0;
  p.grayscale_prob = 0;
  p.blur_prob = 0;
  p.cutout_prob = 0;
  p.jitter_prob = 0;
  return p;
}

Box Geometry::forward(const Box& box) const {
  Box out = box;
  out.x_min = box.x_min * scale_x;
  out.x_max = box.x_max * scale_x;
  out.y_min = box.y_min * scale_y;
  out.y_max = box.y_max * scale_y;
  if (flipped) {
    const double w = static_cast<double>(width);
    out.x_min = w - box.x_max * scale_x;
    out.x_max = w - box.x_min * scale_x;
  }
  return out;
}

Box Geometry::inverse(const Box& box) const {
  Box out = box;
  double x0 = box.x_min, x1 = box.x_max;
  if (flipped) {
    const double w = static_cast<double>(width);
    x0 = w - box.x_max;
    x1 = w - box.x_min;
  }
  out.x_min = x0 / scale_x;
  out.x_max = x1 / scale_x;
  out.y_min = box.y_min / scale_y;
  out.y_max = box.y_max / scale_y;
  return out;
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
  if (height == image.height && width == image.width) return image;
  Image out(height, width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = image.at(c, y0, x0) * (1 - wx) + image.at(c, y0, x1) * wx;
        const double bottom = image.at(c, y1, x0) * (1 - wx) + image.at(c, y1, x1) * wx;
        out.at(c, y, x) = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

std::size_t sample_short_side(const AugPolicy& policy, Rng& rng) {
  const std::size_t steps = (policy.short_side_max - policy.short_side_min) / policy.short_side_step;
  std::uniform_int_distribution<std::size_t> pick(0, steps);
  return policy.short_side_min + pick(rng) * policy.short_side_step;
}

WeakResult weak_transform(const Image& image, const BoxList& boxes, bool flip, std::size_t short_side,
                          std::size_t side_multiple) {
  if (short_side == 0 || side_multiple == 0) throw std::invalid_argument("weak_transform: zero target size");
  const bool portrait = image.height > image.width;
  const double short_src = static_cast<double>(std::min(image.height, image.width));
  const double long_src = static_cast<double>(std::max(image.height, image.width));
  const double scale = static_cast<double>(short_side) / short_src;
  std::size_t long_side = static_cast<std::size_t>(std::llround(long_src * scale / side_multiple)) * side_multiple;
  long_side = std::max(long_side, short_side);
  const std::size_t out_h = portrait ? long_side : short_side;
  const std::size_t out_w = portrait ? short_side : long_side;

  WeakResult result;
  result.geometry.flipped = flip;
  result.geometry.source_width = image.width;
  result.geometry.source_height = image.height;
  result.geometry.width = out_w;
  result.geometry.height = out_h;
  result.geometry.scale_x = static_cast<double>(out_w) / static_cast<double>(image.width);
  result.geometry.scale_y = static_cast<double>(out_h) / static_cast<double>(image.height);

  Image flipped = image;
  if (flip) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) flipped.at(c, y, x) = image.at(c, y, image.width - 1 - x);
      }
    }
  }
  result.view = resize_bilinear(flipped, out_h, out_w);
  for (const auto& b : boxes) {
    const Box t = clip_box(result.geometry.forward(b), static_cast<double>(out_w), static_cast<double>(out_h));
    if (t.width() < 1.0 || t.height() < 1.0) {
      ++result.dropped;
      continue;
    }
    result.boxes.push_back(t);
  }
  return result;
}

WeakResult weak_augment(const Image& image, const BoxList& boxes, const AugPolicy& policy, Rng& rng) {
  const bool flip = coin(policy.flip_prob, rng);
  const std::size_t side = sample_short_side(policy, rng);
  return weak_transform(image, boxes, flip, side);
}

Image to_grayscale(const Image& image) {
  Image out = image;
  for (std::size_t i = 0; i < image.plane(); ++i) {
    const double g = 0.299 * image.pixels[i] + 0.587 * image.pixels[image.plane() + i] +
                     0.114 * image.pixels[2 * image.plane() + i];
    for (std::size_t c = 0; c < 3; ++c) out.pixels[c * image.plane() + i] = g;
  }
  return out;
}

Image gaussian_blur(const Image& image, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[k + radius];
  }
  for (auto& k : kernel) k /= total;
  const auto h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  Image tmp = image, out = image;
  for (std::size_t c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int k = -radius; k <= radius; ++k) {
          const int xx = std::clamp(x + k, 0, w - 1);
          acc += kernel[k + radius] * image.at(c, y, xx);
        }
        tmp.at(c, y, x) = acc;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int k = -radius; k <= radius; ++k) {
          const int yy = std::clamp(y + k, 0, h - 1);
          acc += kernel[k + radius] * tmp.at(c, yy, x);
        }
        out.at(c, y, x) = acc;
      }
    }
  }
  return out;
}

void apply_cutout(Image& image, std::size_t x0, std::size_t y0, std::size_t side, const std::array<double, 3>& fill) {
  const std::size_t x1 = std::min(image.width, x0 + side), y1 = std::min(image.height, y0 + side);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) image.at(c, y, x) = fill[c];
    }
  }
}

Image strong_augment(const Image& weak_view, const AugPolicy& policy, Rng& rng) {
  Image out = weak_view;
  if (coin(policy.jitter_prob, rng)) {
    const double b = 1.0 + uniform(-policy.brightness, policy.brightness, rng);
    const double k = 1.0 + uniform(-policy.contrast, policy.contrast, rng);
    const double s = 1.0 + uniform(-policy.saturation, policy.saturation, rng);
    double mean = 0;
    for (double v : out.pixels) mean += v;
    mean /= static_cast<double>(out.pixels.size());
    const Image gray = to_grayscale(out);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
      double v = out.pixels[i] * b;
      v = (v - mean * b) * k + mean * b;
      v = gray.pixels[i] * b + (v - gray.pixels[i] * b) * s;
      out.pixels[i] = std::clamp(v, 0.0, 1.0);
    }
  }
  if (coin(policy.grayscale_prob, rng)) out = to_grayscale(out);
  if (coin(policy.blur_prob, rng)) out = gaussian_blur(out, uniform(policy.blur_sigma_min, policy.blur_sigma_max, rng));
  if (coin(policy.cutout_prob, rng)) {
    std::uniform_int_distribution<std::size_t> count_dist(policy.cutout_count_min, policy.cutout_count_max);
    const std::size_t count = count_dist(rng);
    const double short_side = static_cast<double>(std::min(out.height, out.width));
    for (std::size_t k = 0; k < count; ++k) {
      const auto side = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(uniform(policy.cutout_size_min, policy.cutout_size_max, rng) * short_side)));
      std::uniform_int_distribution<std::size_t> px(0, out.width - std::min(side, out.width));
      std::uniform_int_distribution<std::size_t> py(0, out.height - std::min(side, out.height));
      const std::size_t x0 = px(rng), y0 = py(rng);
      apply_cutout(out, x0, y0, side, policy.fill);
    }
  }
  return out;
}

}  // namespace ssdlab::augment
