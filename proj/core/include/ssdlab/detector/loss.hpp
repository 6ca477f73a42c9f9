#pragma once

#include <span>
#include <vector>

#include "ssdlab/detector/model.hpp"
#include "ssdlab/detector/targets.hpp"
#include "ssdlab/diff/tensor.hpp"

namespace ssdlab::detector {

struct FocalOptions {
  double gamma = 2.0;
  double alpha = 0.25;
};

/// Scalar reference for one (location, class) entry of the focal loss.
double focal_term(double logit, bool positive, const FocalOptions& options);

/// Sum of sigmoid focal loss over [N, C, rows, cols] logits. `labels[n][loc]`
/// is a class id or kBackground; `weights[n][loc]` scales every class entry
/// of that location (empty span means weight 1 everywhere).
diff::Tensor focal_loss_sum(const diff::Tensor& logits, std::span<const std::vector<int>> labels,
                            std::span<const std::vector<double>> weights, const FocalOptions& options);

/// -log IoU between predicted and target l/t/r/b distances, per location.
/// pred and target are [N, 4, rows, cols]; returns [N, 1, rows, cols].
diff::Tensor iou_loss_map(const diff::Tensor& pred, const diff::Tensor& target);

struct LossBreakdown {
  diff::Tensor total;
  double cls = 0;
  double reg = 0;
  double ctr = 0;
  double unc = 0;
};

/// Focal (normalised by foreground count) + IoU + centerness BCE + Laplace
/// NLL of the uncertainty branch. The last three average over foreground and
/// vanish when there is none. With `stop_error_gradient` the NLL treats the
/// regression error as a constant, so it shapes only the uncertainty branch.
LossBreakdown supervised_loss(const HeadOutputs& outputs, std::span<const LocationTargets> targets,
                              const FocalOptions& focal = {}, bool stop_error_gradient = true);

// Dense constant tensors built from per-image targets.
diff::Tensor foreground_mask(std::span<const LocationTargets> targets);     // [N,1,r,c]
diff::Tensor normalized_ltrb(std::span<const LocationTargets> targets);     // [N,4,r,c], 1 at background

}  // namespace ssdlab::detector
