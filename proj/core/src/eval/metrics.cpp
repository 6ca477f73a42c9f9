#include "ssdlab/eval/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ssdlab::eval {

namespace {

double score_of(const Box& b) {
  if (!b.score) throw std::invalid_argument("detections must carry scores");
  return *b.score;
}

// Greedy matching of score-ordered detections against one image's ground truth.
void match_into(const std::vector<const Box*>& ordered, const std::vector<const Box*>& gts, double iou_threshold,
                std::vector<bool>& matched, std::vector<bool>& flags) {
  for (const Box* det : ordered) {
    double best_iou = -1.0;
    std::ptrdiff_t best = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (matched[g]) continue;
      const double overlap = iou(*det, *gts[g]);
      if (overlap >= iou_threshold && overlap > best_iou) {
        best_iou = overlap;
        best = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (best >= 0) matched[static_cast<std::size_t>(best)] = true;
    flags.push_back(best >= 0);
  }
}

}  // namespace

std::vector<bool> match_detections(const BoxList& detections, const BoxList& ground_truth, double iou_threshold) {
  std::vector<const Box*> ordered;
  for (const auto& d : detections) ordered.push_back(&d);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Box* a, const Box* b) { return score_of(*a) > score_of(*b); });
  std::vector<const Box*> gts;
  for (const auto& g : ground_truth) gts.push_back(&g);
  std::vector<bool> matched(gts.size(), false), flags;
  match_into(ordered, gts, iou_threshold, matched, flags);
  return flags;
}

PrCurve build_curve(const std::vector<bool>& tp_flags, std::size_t ground_truth_count) {
  PrCurve curve;
  curve.ground_truth_count = ground_truth_count;
  std::size_t tp = 0, fp = 0;
  for (bool flag : tp_flags) {
    flag ? ++tp : ++fp;
    curve.true_positives.push_back(tp);
    curve.false_positives.push_back(fp);
    curve.precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    curve.recall.push_back(ground_truth_count ? static_cast<double>(tp) / static_cast<double>(ground_truth_count) : 0.0);
  }
  return curve;
}

double average_precision(const PrCurve& curve) {
  if (curve.ground_truth_count == 0) throw std::domain_error("average precision undefined without ground truth");
  const std::size_t n = curve.precision.size();
  // Precision envelope: max precision to the right.
  std::vector<double> envelope(curve.precision);
  for (std::size_t i = n; i-- > 1;) envelope[i - 1] = std::max(envelope[i - 1], envelope[i]);
  double total = 0.0;
  std::size_t cursor = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    while (cursor < n && curve.recall[cursor] < r) ++cursor;
    if (cursor < n) total += envelope[cursor];
  }
  return total / 101.0;
}

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back((50 + 5 * k) / 100.0);
  return t;
}

ApTable map_coco(const std::vector<ImageResult>& images, std::size_t num_classes) {
  ApTable table;
  table.thresholds = coco_iou_thresholds();
  const std::size_t nt = table.thresholds.size();
  table.per_class.assign(num_classes, std::vector<double>(nt, 0.0));
  table.evaluated.assign(num_classes, false);
  table.per_class_mean.assign(num_classes, 0.0);
  table.map_at.assign(nt, 0.0);

  std::size_t evaluated = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const int cls = static_cast<int>(c);
    struct Entry {
      std::size_t image;
      const Box* box;
    };
    std::vector<Entry> dets;
    std::vector<std::vector<const Box*>> gts(images.size());
    std::size_t gt_count = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      for (const auto& d : images[i].detections) {
        if (d.class_id == cls) dets.push_back({i, &d});
      }
      for (const auto& g : images[i].ground_truth) {
        if (g.class_id == cls) {
          gts[i].push_back(&g);
          ++gt_count;
        }
      }
    }
    if (gt_count == 0) continue;
    table.evaluated[c] = true;
    ++evaluated;
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Entry& a, const Entry& b) { return score_of(*a.box) > score_of(*b.box); });
    for (std::size_t t = 0; t < nt; ++t) {
      std::vector<std::vector<bool>> matched(images.size());
      for (std::size_t i = 0; i < images.size(); ++i) matched[i].assign(gts[i].size(), false);
      std::vector<bool> flags;
      flags.reserve(dets.size());
      for (const auto& e : dets) match_into({e.box}, gts[e.image], table.thresholds[t], matched[e.image], flags);
      table.per_class[c][t] = average_precision(build_curve(flags, gt_count));
    }
    table.per_class_mean[c] =
        std::accumulate(table.per_class[c].begin(), table.per_class[c].end(), 0.0) / static_cast<double>(nt);
  }
  if (evaluated == 0) throw std::invalid_argument("map_coco: no ground truth in the evaluation set");
  for (std::size_t t = 0; t < nt; ++t) {
    double sum = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (table.evaluated[c]) sum += table.per_class[c][t];
    }
    table.map_at[t] = sum / static_cast<double>(evaluated);
  }
  table.map_50 = table.map_at.front();
  table.map_50_95 = std::accumulate(table.map_at.begin(), table.map_at.end(), 0.0) / static_cast<double>(nt);
  return table;
}

}  // namespace ssdlab::eval
