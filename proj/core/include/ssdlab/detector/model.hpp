#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ssdlab/diff/optim.hpp"
#include "ssdlab/diff/tensor.hpp"

namespace ssdlab::detector {

inline constexpr std::size_t kStride = 8;

struct DetectorConfig {
  std::size_t num_classes = 3;
  // Three stride-2 conv blocks give the overall stride of 8.
  std::vector<std::size_t> backbone_channels{8, 16, 32};
  std::size_t head_channels = 32;
  // Group normalisation after every 3x3 conv (0 disables it). Layers with
  // fewer channels use one group per channel.
  std::size_t norm_groups = 4;
  // Initial foreground probability encoded in the classification bias.
  double prior_prob = 0.01;
  // Lower bound on the predicted per-side uncertainty; keeps the Laplace term non-negative.
  double uncertainty_floor = 0.05;
};

/// Backbone plus the four head branches: classification (C), centerness (1),
/// regression (4, l/t/r/b) and uncertainty (4, one per side).
struct DetectorParams {
  DetectorConfig config;
  diff::ParameterSet params;

  DetectorParams clone() const { return {config, params.clone()}; }
};

DetectorParams init_detector(const DetectorConfig& config, std::uint64_t seed);

// Sets every weight and bias of the four output branches to zero.
void zero_head_outputs(DetectorParams& model);

struct GridGeometry {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = kStride;

  std::size_t size() const { return rows * cols; }
  double center_x(std::size_t col) const { return static_cast<double>(col * stride) + stride / 2.0; }
  double center_y(std::size_t row) const { return static_cast<double>(row * stride) + stride / 2.0; }

  static GridGeometry for_image(std::size_t height, std::size_t width);
};

/// Dense per-location predictions for a batch. All tensors are [N, ch, rows, cols].
struct HeadOutputs {
  diff::Tensor cls_logits;  // ch = C
  diff::Tensor ctr_logits;  // ch = 1
  diff::Tensor reg;         // ch = 4, l/t/r/b in stride units, > 0
  diff::Tensor unc;         // ch = 4, per-side uncertainty in stride units, > floor
  GridGeometry grid;
  std::size_t image_height = 0;
  std::size_t image_width = 0;
  double uncertainty_floor = 0.05;

  std::size_t batch() const { return cls_logits.dim(0); }
  std::size_t num_classes() const { return cls_logits.dim(1); }
  HeadOutputs slice_batch(std::size_t begin, std::size_t end) const;
};

/// images: [N, 3, H, W] with H and W divisible by the stride.
HeadOutputs forward(const DetectorParams& model, const diff::Tensor& images);

}  // namespace ssdlab::detector
