#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "ssdlab/box.hpp"
#include "ssdlab/detector/model.hpp"

namespace ssdlab::detector {

enum class ScoreMode {
  ClassOnly,              // sigmoid(cls)
  ClassSqrtCenterness,    // sigmoid(cls) * sqrt(sigmoid(ctr))
};

struct Detection {
  Box box;                         // score always set
  std::array<double, 4> delta{};   // per-side uncertainty of the source location
  std::size_t location = 0;        // row-major grid index
};

struct DecodeOptions {
  ScoreMode score_mode = ScoreMode::ClassOnly;
  double score_threshold = 0.05;
  double nms_iou = 0.6;
  std::size_t max_detections = 100;
};

/// Boxes for one image of the batch: centre +/- ltrb, clipped, scored,
/// thresholded (score >= threshold), class-wise NMS, sorted by descending score.
std::vector<Detection> decode_detections(const HeadOutputs& outputs, std::size_t image_index,
                                         const DecodeOptions& options);

/// Greedy class-wise NMS: keep the best remaining box, drop same-class boxes
/// with IoU above the threshold. Input order breaks score ties.
BoxList nms(const BoxList& boxes, double iou_threshold);
std::vector<Detection> nms(const std::vector<Detection>& detections, double iou_threshold);

}  // namespace ssdlab::detector
