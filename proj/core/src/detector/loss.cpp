#include "ssdlab/detector/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ssdlab/diff/ops.hpp"

namespace ssdlab::detector {

using diff::Tensor;
namespace ops = diff;

namespace {

double softplus_scalar(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

void check_targets(const HeadOutputs& outputs, std::span<const LocationTargets> targets) {
  if (targets.size() != outputs.batch()) {
    throw std::invalid_argument("supervised_loss: " + std::to_string(targets.size()) + " target sets for batch of " +
                                std::to_string(outputs.batch()));
  }
  for (const auto& t : targets) {
    if (t.grid.rows != outputs.grid.rows || t.grid.cols != outputs.grid.cols) {
      throw std::invalid_argument("supervised_loss: targets and outputs are on different grids");
    }
  }
}

}  // namespace

double focal_term(double logit, bool positive, const FocalOptions& options) {
  // -log p = softplus(-x), -log(1-p) = softplus(x)
  if (positive) return options.alpha * std::exp(-options.gamma * softplus_scalar(logit)) * softplus_scalar(-logit);
  return (1.0 - options.alpha) * std::exp(-options.gamma * softplus_scalar(-logit)) * softplus_scalar(logit);
}

Tensor focal_loss_sum(const Tensor& logits, std::span<const std::vector<int>> labels,
                      std::span<const std::vector<double>> weights, const FocalOptions& options) {
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  const std::size_t plane = logits.dim(2) * logits.dim(3);
  if (labels.size() != batch || (!weights.empty() && weights.size() != batch)) {
    throw std::invalid_argument("focal_loss_sum: label/weight batch mismatch");
  }
  std::vector<double> pos_coef(logits.numel(), 0.0), neg_coef(logits.numel(), 0.0);
  for (std::size_t n = 0; n < batch; ++n) {
    if (labels[n].size() != plane || (!weights.empty() && weights[n].size() != plane)) {
      throw std::invalid_argument("focal_loss_sum: per-image label count does not match the grid");
    }
    for (std::size_t loc = 0; loc < plane; ++loc) {
      const double w = weights.empty() ? 1.0 : weights[n][loc];
      const int label = labels[n][loc];
      for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t idx = (n * classes + c) * plane + loc;
        if (label == static_cast<int>(c)) {
          pos_coef[idx] = options.alpha * w;
        } else {
          neg_coef[idx] = (1.0 - options.alpha) * w;
        }
      }
    }
  }
  const Tensor sp_pos = ops::softplus(logits);            // -log(1-p)
  const Tensor sp_neg = ops::softplus(ops::neg(logits));  // -log p
  const Tensor pos_map = ops::mul(ops::exp(ops::affine(sp_pos, -options.gamma)), sp_neg);
  const Tensor neg_map = ops::mul(ops::exp(ops::affine(sp_neg, -options.gamma)), sp_pos);
  const Tensor weighted = ops::add(ops::mul(Tensor::from(logits.shape(), std::move(pos_coef)), pos_map),
                                   ops::mul(Tensor::from(logits.shape(), std::move(neg_coef)), neg_map));
  return ops::reduce_sum(weighted);
}

Tensor iou_loss_map(const Tensor& pred, const Tensor& target) {
  auto side = [](const Tensor& t, std::size_t i) { return ops::slice(t, 1, i, i + 1); };
  const Tensor pl = side(pred, 0), pt = side(pred, 1), pr = side(pred, 2), pb = side(pred, 3);
  const Tensor tl = side(target, 0), tt = side(target, 1), tr = side(target, 2), tb = side(target, 3);
  const Tensor pred_area = ops::mul(ops::add(pl, pr), ops::add(pt, pb));
  const Tensor target_area = ops::mul(ops::add(tl, tr), ops::add(tt, tb));
  const Tensor inter_w = ops::add(ops::minimum(pl, tl), ops::minimum(pr, tr));
  const Tensor inter_h = ops::add(ops::minimum(pt, tt), ops::minimum(pb, tb));
  const Tensor inter = ops::mul(inter_w, inter_h);
  const Tensor uni = ops::sub(ops::add(pred_area, target_area), inter);
  // Targets are strictly positive and predictions are softplus-mapped, so inter > 0.
  return ops::sub(ops::log(uni), ops::log(inter));
}

Tensor foreground_mask(std::span<const LocationTargets> targets) {
  const auto& grid = targets.front().grid;
  std::vector<double> mask;
  mask.reserve(targets.size() * grid.size());
  for (const auto& t : targets) {
    for (int c : t.cls) mask.push_back(c == kBackground ? 0.0 : 1.0);
  }
  return Tensor::from({targets.size(), 1, grid.rows, grid.cols}, std::move(mask));
}

Tensor normalized_ltrb(std::span<const LocationTargets> targets) {
  const auto& grid = targets.front().grid;
  const std::size_t plane = grid.size();
  std::vector<double> values(targets.size() * 4 * plane, 1.0);
  for (std::size_t n = 0; n < targets.size(); ++n) {
    for (std::size_t loc = 0; loc < plane; ++loc) {
      if (targets[n].cls[loc] == kBackground) continue;
      for (std::size_t s = 0; s < 4; ++s) {
        values[(n * 4 + s) * plane + loc] = targets[n].ltrb[loc][s] / static_cast<double>(grid.stride);
      }
    }
  }
  return Tensor::from({targets.size(), 4, grid.rows, grid.cols}, std::move(values));
}

LossBreakdown supervised_loss(const HeadOutputs& outputs, std::span<const LocationTargets> targets,
                              const FocalOptions& focal, bool stop_error_gradient) {
  check_targets(outputs, targets);
  std::size_t fg = 0;
  std::vector<std::vector<int>> labels;
  labels.reserve(targets.size());
  for (const auto& t : targets) {
    fg += t.foreground_count();
    labels.push_back(t.cls);
  }
  const double normalizer = static_cast<double>(std::max<std::size_t>(fg, 1));

  LossBreakdown out;
  Tensor cls = ops::affine(focal_loss_sum(outputs.cls_logits, labels, {}, focal), 1.0 / normalizer);
  out.cls = cls.item();
  if (fg == 0) {
    out.total = cls;
    return out;
  }

  const Tensor mask = foreground_mask(targets);
  const Tensor mask4 = ops::broadcast(mask, outputs.reg.shape());
  const Tensor ltrb = normalized_ltrb(targets);

  const Tensor reg = ops::affine(ops::reduce_sum(ops::mul(iou_loss_map(outputs.reg, ltrb), mask)), 1.0 / normalizer);

  std::vector<double> ctr_target;
  ctr_target.reserve(mask.numel());
  for (const auto& t : targets) ctr_target.insert(ctr_target.end(), t.centerness.begin(), t.centerness.end());
  // BCE with logits: softplus(x) - y*x
  const Tensor ctr_bce = ops::sub(ops::softplus(outputs.ctr_logits),
                                  ops::mul(Tensor::from(mask.shape(), std::move(ctr_target)), outputs.ctr_logits));
  const Tensor ctr = ops::affine(ops::reduce_sum(ops::mul(ctr_bce, mask)), 1.0 / normalizer);

  // Laplace NLL |e|/delta + log(delta/floor). By default the regression error
  // is held constant so this term only trains the uncertainty branch.
  Tensor err;
  if (stop_error_gradient) {
    std::vector<double> values(outputs.reg.numel());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::abs(outputs.reg.at(i) - ltrb.at(i));
    err = Tensor::from(outputs.reg.shape(), std::move(values));
  } else {
    err = ops::abs(ops::sub(outputs.reg, ltrb));
  }
  const Tensor nll = ops::add(ops::div(err, outputs.unc),
                              ops::log(ops::affine(outputs.unc, 1.0 / outputs.uncertainty_floor)));
  const Tensor unc = ops::affine(ops::reduce_sum(ops::mul(nll, mask4)), 1.0 / normalizer);

  out.reg = reg.item();
  out.ctr = ctr.item();
  out.unc = unc.item();
  out.total = ops::add(ops::add(cls, reg), ops::add(ctr, unc));
  return out;
}

}  // namespace ssdlab::detector
