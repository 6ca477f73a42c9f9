#include "ssdlab/detector/decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ssdlab::detector {

namespace {

double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

template <typename GetBox>
std::vector<std::size_t> greedy_keep(std::size_t count, GetBox&& box_of, double iou_threshold) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return *box_of(a).score > *box_of(b).score; });
  std::vector<std::size_t> kept;
  std::vector<bool> removed(count, false);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (removed[order[i]]) continue;
    const Box& best = box_of(order[i]);
    kept.push_back(order[i]);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (removed[order[j]]) continue;
      const Box& other = box_of(order[j]);
      if (other.class_id == best.class_id && iou(best, other) > iou_threshold) removed[order[j]] = true;
    }
  }
  return kept;
}

}  // namespace

BoxList nms(const BoxList& boxes, double iou_threshold) {
  for (const auto& b : boxes) {
    if (!b.score) throw std::invalid_argument("nms: every box needs a score");
  }
  const auto kept = greedy_keep(boxes.size(), [&](std::size_t i) -> const Box& { return boxes[i]; }, iou_threshold);
  BoxList out;
  out.reserve(kept.size());
  for (auto i : kept) out.push_back(boxes[i]);
  return out;
}

std::vector<Detection> nms(const std::vector<Detection>& detections, double iou_threshold) {
  const auto kept = greedy_keep(
      detections.size(), [&](std::size_t i) -> const Box& { return detections[i].box; }, iou_threshold);
  std::vector<Detection> out;
  out.reserve(kept.size());
  for (auto i : kept) out.push_back(detections[i]);
  return out;
}

std::vector<Detection> decode_detections(const HeadOutputs& outputs, std::size_t image_index,
                                         const DecodeOptions& options) {
  if (!(options.score_threshold >= 0 && options.score_threshold <= 1) ||
      !(options.nms_iou >= 0 && options.nms_iou <= 1)) {
    throw std::invalid_argument("decode_detections: thresholds must lie in [0,1]");
  }
  if (image_index >= outputs.batch()) throw std::out_of_range("decode_detections: image index out of range");
  const auto& grid = outputs.grid;
  const std::size_t plane = grid.size();
  const std::size_t classes = outputs.num_classes();
  const double stride = static_cast<double>(grid.stride);
  const double width = static_cast<double>(outputs.image_width);
  const double height = static_cast<double>(outputs.image_height);
  const auto cls = outputs.cls_logits.data().subspan(image_index * classes * plane, classes * plane);
  const auto ctr = outputs.ctr_logits.data().subspan(image_index * plane, plane);
  const auto reg = outputs.reg.data().subspan(image_index * 4 * plane, 4 * plane);
  const auto unc = outputs.unc.data().subspan(image_index * 4 * plane, 4 * plane);

  std::vector<Detection> candidates;
  for (std::size_t loc = 0; loc < plane; ++loc) {
    const std::size_t row = loc / grid.cols, col = loc % grid.cols;
    const double cx = grid.center_x(col), cy = grid.center_y(row);
    for (std::size_t c = 0; c < classes; ++c) {
      double score = sigmoid_scalar(cls[c * plane + loc]);
      if (options.score_mode == ScoreMode::ClassSqrtCenterness) score *= std::sqrt(sigmoid_scalar(ctr[loc]));
      if (score < options.score_threshold) continue;
      Box box{cx - reg[0 * plane + loc] * stride, cy - reg[1 * plane + loc] * stride,
              cx + reg[2 * plane + loc] * stride, cy + reg[3 * plane + loc] * stride,
              static_cast<int>(c), score};
      box = clip_box(box, width, height);
      if (!box.valid()) continue;
      Detection det;
      det.box = box;
      for (std::size_t s = 0; s < 4; ++s) det.delta[s] = unc[s * plane + loc];
      det.location = loc;
      candidates.push_back(det);
    }
  }
  auto kept = nms(candidates, options.nms_iou);
  if (kept.size() > options.max_detections) kept.resize(options.max_detections);
  return kept;
}

}  // namespace ssdlab::detector
