#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <vector>

#include "ssdlab/box.hpp"

namespace ssdlab::eval {

/// Detections and ground truth for one image. Detection boxes carry scores.
struct ImageResult {
  BoxList detections;
  BoxList ground_truth;
};

/// TP/FP flag per detection, in the order the detections were given after a
/// stable descending-score sort. Single class, single image.
std::vector<bool> match_detections(const BoxList& detections, const BoxList& ground_truth, double iou_threshold);

struct PrCurve {
  std::vector<double> recall;
  std::vector<double> precision;
  std::vector<std::size_t> true_positives;   // cumulative
  std::vector<std::size_t> false_positives;  // cumulative
  std::size_t ground_truth_count = 0;
};

/// Curve from TP flags ordered by descending score.
PrCurve build_curve(const std::vector<bool>& tp_flags, std::size_t ground_truth_count);

/// 101-point interpolation: mean over r in {0, .01, ..., 1} of the largest
/// precision at recall >= r (0 when no point reaches r).
/// Throws std::domain_error when the class has no ground truth.
double average_precision(const PrCurve& curve);

/// IoU thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> coco_iou_thresholds();

struct ApTable {
  std::vector<double> thresholds;
  // per_class[c][t]; classes without ground truth are absent from `evaluated`.
  std::vector<std::vector<double>> per_class;
  std::vector<bool> evaluated;
  std::vector<double> per_class_mean;   // AP averaged over thresholds
  std::vector<double> map_at;           // mAP per threshold (mean over evaluated classes)
  double map_50 = 0;
  double map_50_95 = 0;
};

/// COCO-style evaluation over a set of images. Throws std::invalid_argument
/// when no ground truth exists at all.
ApTable map_coco(const std::vector<ImageResult>& images, std::size_t num_classes);

}  // namespace ssdlab::eval
