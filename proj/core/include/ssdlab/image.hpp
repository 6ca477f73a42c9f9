#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ssdlab/diff/tensor.hpp"

namespace ssdlab {

using Rng = std::mt19937_64;

/// Keeps large tensor buffers on the heap instead of fresh mmap regions, which
/// otherwise page-fault on every training step. Idempotent; no-op off glibc.
void tune_allocator();

/// Derives an independent stream seed from a base seed and an index (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Planar RGB image, values in [0,1], laid out [channel][row][col].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(3 * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
  std::size_t plane() const { return height * width; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Stacks same-sized images into a [N, 3, H, W] tensor.
diff::Tensor stack_images(std::span<const Image> images);
diff::Tensor stack_images(std::span<const Image* const> images);

}  // namespace ssdlab
