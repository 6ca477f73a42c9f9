#include "ssdlab/selftrain/selftrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "checkpoint.hpp"
#include "ssdlab/detector/targets.hpp"
#include "ssdlab/diff/ops.hpp"

namespace ssdlab::selftrain {

using detector::HeadOutputs;
using detector::LocationTargets;
using diff::Tensor;
namespace ops = diff;

namespace {

void require_unit(double v, const char* name) {
  if (!(v >= 0 && v <= 1)) throw std::invalid_argument(std::string("selftrain: ") + name + " must lie in [0,1]");
}

// Parameters that a step never reached still need a (zero) gradient buffer.
void allocate_grads(diff::ParameterSet& params) {
  for (auto& entry : params.entries) entry.second.mutable_grad();
}

std::vector<LocationTargets> targets_for(std::span<const LabeledView> views, const detector::GridGeometry& grid) {
  std::vector<LocationTargets> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back(detector::assign_targets(v.boxes, grid));
  return out;
}

Tensor stack_views(std::span<const LabeledView> views) {
  std::vector<const Image*> ptrs;
  for (const auto& v : views) ptrs.push_back(&v.view);
  return stack_images(std::span<const Image* const>(ptrs));
}

void apply_step(TeacherStudentState& state, const Tensor& total) {
  allocate_grads(state.student.params);
  diff::backward(total);
  diff::sgd_step(state.student.params, state.optimizer);
}

}  // namespace

void SelfTrainConfig::validate() const {
  require_unit(alpha, "alpha");
  require_unit(tau, "tau");
  if (sigma < 0) throw std::invalid_argument("selftrain: sigma must be non-negative");
  if (lambda_u < 0) throw std::invalid_argument("selftrain: lambda_u must be non-negative");
  if (background_weight < 0) throw std::invalid_argument("selftrain: background_weight must be non-negative");
  require_unit(background_max_score, "background_max_score");
  require_unit(pseudo_nms_iou, "pseudo_nms_iou");
  if (burn_in_iters > total_iters) throw std::invalid_argument("selftrain: burn_in_iters exceeds total_iters");
  if (eval_every == 0) throw std::invalid_argument("selftrain: eval_every must be positive");
  if (labeled_batch == 0) throw std::invalid_argument("selftrain: labeled_batch must be positive");
  if (!(learning_rate > 0)) throw std::invalid_argument("selftrain: learning_rate must be positive");
  if (momentum < 0 || momentum >= 1) throw std::invalid_argument("selftrain: momentum must lie in [0,1)");
  if (eval_batch == 0) throw std::invalid_argument("selftrain: eval_batch must be positive");
  policy.validate();
}

TeacherStudentState TeacherStudentState::create(const detector::DetectorParams& initial, const SelfTrainConfig& config) {
  TeacherStudentState s;
  s.student = initial.clone();
  s.teacher = initial.clone();
  s.teacher.params.set_requires_grad(false);
  s.student.params.set_requires_grad(true);
  s.optimizer = diff::SgdState::for_params(s.student.params, config.learning_rate, config.momentum);
  s.alpha = config.alpha;
  s.burn_in_iters = config.burn_in_iters;
  s.sigma = config.sigma;
  s.tau = config.tau;
  s.lambda_u = config.lambda_u;
  return s;
}

void ema_update(diff::ParameterSet& teacher, const diff::ParameterSet& student, double alpha) {
  require_unit(alpha, "alpha");
  diff::require_same_layout(teacher, student, "ema_update");
  const double beta = 1.0 - alpha;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    auto t = teacher[i].mutable_data();
    const auto s = student[i].data();
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = alpha * t[j] + beta * s[j];
  }
}

void ema_update(TeacherStudentState& state) { ema_update(state.teacher.params, state.student.params, state.alpha); }

double localization_weight(const std::array<double, 4>& delta) {
  const double mean = (delta[0] + delta[1] + delta[2] + delta[3]) / 4.0;
  return std::clamp(std::exp(-mean), 0.0, 1.0);
}

std::vector<PseudoLabel> pseudo_labels_from_outputs(const HeadOutputs& teacher_outputs, std::size_t image_index,
                                                    double tau, double nms_iou) {
  require_unit(tau, "tau");
  detector::DecodeOptions opts;
  opts.score_mode = detector::ScoreMode::ClassOnly;
  opts.score_threshold = tau;
  opts.nms_iou = nms_iou;
  std::vector<PseudoLabel> out;
  for (const auto& det : detector::decode_detections(teacher_outputs, image_index, opts)) {
    if (det.box.width() <= 0 || det.box.height() <= 0) continue;
    out.push_back({det.box, det.delta, image_index});
  }
  return out;
}

std::vector<PseudoLabel> generate_pseudo_labels(const detector::DetectorParams& teacher, const Image& weak_view,
                                                double tau, double nms_iou) {
  diff::NoGradGuard guard;
  const Image* view = &weak_view;
  const auto outputs = detector::forward(teacher, stack_images(std::span<const Image* const>(&view, 1)));
  return pseudo_labels_from_outputs(outputs, 0, tau, nms_iou);
}

LocationTargets pseudo_targets(std::span<const PseudoLabel> labels, const detector::GridGeometry& grid) {
  BoxList boxes;
  boxes.reserve(labels.size());
  for (const auto& l : labels) boxes.push_back(l.box);
  return detector::assign_targets(boxes, grid);
}

Tensor unsup_cls_loss(const HeadOutputs& student, std::span<const std::vector<PseudoLabel>> labels,
                      double background_weight, const detector::FocalOptions& focal, double min_normalizer,
                      std::span<const std::vector<bool>> ignore) {
  if (!(min_normalizer >= 1)) throw std::invalid_argument("unsup_cls_loss: normalizer floor must be >= 1");
  if (labels.size() != student.batch()) throw std::invalid_argument("unsup_cls_loss: one pseudo-label list per image required");
  if (!ignore.empty()) {
    bool sized = ignore.size() == labels.size();
    for (const auto& mask : ignore) sized = sized && mask.size() == student.grid.size();
    if (!sized) throw std::invalid_argument("unsup_cls_loss: one ignore flag per location of every image required");
  }
  std::vector<std::vector<int>> cls;
  std::vector<std::vector<double>> weights;
  std::size_t fg = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const auto& image_labels = labels[n];
    const auto targets = pseudo_targets(image_labels, student.grid);
    std::vector<double> w(targets.cls.size(), background_weight);
    for (std::size_t loc = 0; loc < w.size(); ++loc) {
      if (targets.cls[loc] == detector::kBackground) {
        if (!ignore.empty() && ignore[n][loc]) w[loc] = 0.0;
        continue;
      }
      w[loc] = localization_weight(image_labels[static_cast<std::size_t>(targets.box_index[loc])].delta_t);
      ++fg;
    }
    cls.push_back(targets.cls);
    weights.push_back(std::move(w));
  }
  const Tensor sum = detector::focal_loss_sum(student.cls_logits, cls, weights, focal);
  return ops::affine(sum, 1.0 / std::max(static_cast<double>(fg), min_normalizer));
}

std::vector<bool> confident_locations(const HeadOutputs& teacher_outputs, std::size_t image_index, double threshold) {
  const std::size_t plane = teacher_outputs.grid.size(), classes = teacher_outputs.num_classes();
  const auto logits = teacher_outputs.cls_logits.data().subspan(image_index * classes * plane, classes * plane);
  if (threshold <= 0) return std::vector<bool>(plane, true);
  std::vector<bool> flags(plane, false);
  if (threshold >= 1) return flags;
  // sigmoid is monotone, so compare logits against the threshold's logit.
  const double cut = std::log(threshold / (1.0 - threshold));
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t loc = 0; loc < plane; ++loc) {
      if (logits[c * plane + loc] >= cut) flags[loc] = true;
    }
  }
  return flags;
}

double gated_side_loss(double delta_t, double delta_s, double sigma, double d_t, double d_s) {
  if (sigma < 0) throw std::invalid_argument("gated_side_loss: sigma must be non-negative");
  return delta_t + sigma <= delta_s ? std::abs(d_t - d_s) : 0.0;
}

Tensor unsup_reg_loss(const HeadOutputs& student, const HeadOutputs& teacher, std::span<const LocationTargets> targets,
                      double sigma) {
  if (sigma < 0) throw std::invalid_argument("unsup_reg_loss: sigma must be non-negative");
  if (student.reg.shape() != teacher.reg.shape() || targets.size() != student.batch()) {
    throw std::invalid_argument("unsup_reg_loss: teacher and student outputs must cover the same locations");
  }
  const std::size_t plane = student.grid.size();
  const auto delta_t = teacher.unc.data();
  const auto delta_s = student.unc.data();
  std::vector<double> gate(student.reg.numel(), 0.0);
  std::size_t fg = 0;
  for (std::size_t n = 0; n < targets.size(); ++n) {
    for (std::size_t loc = 0; loc < plane; ++loc) {
      if (targets[n].cls[loc] == detector::kBackground) continue;
      ++fg;
      for (std::size_t s = 0; s < 4; ++s) {
        const std::size_t idx = (n * 4 + s) * plane + loc;
        if (delta_t[idx] + sigma <= delta_s[idx]) gate[idx] = 1.0;
      }
    }
  }
  const Tensor diff_abs = ops::abs(ops::sub(ops::detach(teacher.reg), student.reg));
  const Tensor sum = ops::reduce_sum(ops::mul(Tensor::from(student.reg.shape(), std::move(gate)), diff_abs));
  // Averaged per side: the L1 gradient has unit magnitude per side, so a
  // per-location sum would outweigh the supervised IoU term several-fold.
  return ops::affine(sum, 1.0 / static_cast<double>(4 * std::max<std::size_t>(fg, 1)));
}

StepRecord supervised_step(TeacherStudentState& state, std::span<const LabeledView> labeled,
                           const SelfTrainConfig& config) {
  if (labeled.empty()) throw std::invalid_argument("supervised_step: empty labeled batch");
  const Tensor images = stack_views(labeled);
  const auto outputs = detector::forward(state.student, images);
  const auto targets = targets_for(labeled, outputs.grid);
  const auto sup = detector::supervised_loss(outputs, targets, config.focal);
  StepRecord rec;
  rec.total = sup.total.item();
  rec.sup_cls = sup.cls;
  rec.sup_reg = sup.reg;
  rec.sup_ctr = sup.ctr;
  rec.sup_unc = sup.unc;
  apply_step(state, sup.total);
  ++state.iteration;
  return rec;
}

StepRecord train_step(TeacherStudentState& state, const TrainBatch& batch, const SelfTrainConfig& config) {
  if (batch.labeled.empty()) throw std::invalid_argument("train_step: empty labeled batch");
  const Tensor images = stack_views(batch.labeled);
  const auto outputs = detector::forward(state.student, images);
  const auto targets = targets_for(batch.labeled, outputs.grid);
  const auto sup = detector::supervised_loss(outputs, targets, config.focal);

  StepRecord rec;
  rec.sup_cls = sup.cls;
  rec.sup_reg = sup.reg;
  rec.sup_ctr = sup.ctr;
  rec.sup_unc = sup.unc;
  Tensor total = sup.total;

  if (!config.supervised_only && !batch.unlabeled.empty()) {
    std::vector<const Image*> weak, strong;
    for (const auto& pair : batch.unlabeled) {
      weak.push_back(&pair.weak_view);
      strong.push_back(&pair.strong_view);
    }
    HeadOutputs teacher_out;
    {
      diff::NoGradGuard guard;
      teacher_out = detector::forward(state.teacher, stack_images(std::span<const Image* const>(weak)));
    }
    std::vector<std::vector<PseudoLabel>> pseudo;
    std::vector<LocationTargets> ptargets;
    std::vector<std::vector<bool>> uncertain;
    for (std::size_t i = 0; i < batch.unlabeled.size(); ++i) {
      pseudo.push_back(pseudo_labels_from_outputs(teacher_out, i, state.tau, config.pseudo_nms_iou));
      rec.pseudo_labels += pseudo.back().size();
      ptargets.push_back(pseudo_targets(pseudo.back(), teacher_out.grid));
      if (config.background_max_score < 1.0) {
        uncertain.push_back(confident_locations(teacher_out, i, config.background_max_score));
      }
    }
    const auto student_out = detector::forward(state.student, stack_images(std::span<const Image* const>(strong)));
    // With few confident pseudo-boxes a normaliser of one would let the
    // background term dwarf the supervised loss; floor it at the labeled
    // batch's foreground count so both halves share a scale.
    std::size_t labeled_fg = 0;
    for (const auto& t : targets) {
      for (int c : t.cls) labeled_fg += c != detector::kBackground ? 1 : 0;
    }
    const Tensor ucls = unsup_cls_loss(student_out, pseudo, config.background_weight, config.focal,
                                       std::max<double>(1.0, static_cast<double>(labeled_fg)), uncertain);
    const Tensor ureg = unsup_reg_loss(student_out, teacher_out, ptargets, state.sigma);
    rec.unsup_cls = ucls.item();
    rec.unsup_reg = ureg.item();
    total = ops::add(total, ops::affine(ops::add(ucls, ureg), state.lambda_u));
  }
  rec.total = total.item();
  apply_step(state, total);
  ema_update(state);
  ++state.iteration;
  return rec;
}

BatchSampler::BatchSampler(const data::Dataset& dataset, std::vector<int> labeled_ids, std::vector<int> unlabeled_ids,
                           const SelfTrainConfig& config, std::uint64_t seed)
    : policy_(config.policy),
      labeled_batch_(config.labeled_batch),
      unlabeled_batch_(config.unlabeled_batch),
      labeled_rng_(derive_seed(seed, 1)),
      unlabeled_rng_(derive_seed(seed, 2)) {
  if (labeled_ids.empty()) throw std::invalid_argument("BatchSampler: empty labeled set");
  std::sort(labeled_ids.begin(), labeled_ids.end());
  std::sort(unlabeled_ids.begin(), unlabeled_ids.end());
  for (int id : labeled_ids) labeled_.push_back(&dataset.by_id(id));
  for (int id : unlabeled_ids) unlabeled_.push_back(&dataset.by_id(id));
}

std::vector<LabeledView> BatchSampler::next_labeled() {
  std::uniform_int_distribution<std::size_t> pick(0, labeled_.size() - 1);
  std::vector<LabeledView> out;
  const std::size_t side = augment::sample_short_side(policy_, labeled_rng_);
  std::bernoulli_distribution flip(policy_.flip_prob);
  for (std::size_t i = 0; i < labeled_batch_; ++i) {
    const auto* sample = labeled_[pick(labeled_rng_)];
    auto weak = augment::weak_transform(sample->image, sample->boxes, flip(labeled_rng_), side);
    out.push_back({augment::strong_augment(weak.view, policy_, labeled_rng_), std::move(weak.boxes)});
  }
  return out;
}

std::vector<augment::ViewPair> BatchSampler::next_unlabeled() {
  std::vector<augment::ViewPair> out;
  if (unlabeled_.empty()) return out;
  std::uniform_int_distribution<std::size_t> pick(0, unlabeled_.size() - 1);
  const std::size_t side = augment::sample_short_side(policy_, unlabeled_rng_);
  std::bernoulli_distribution flip(policy_.flip_prob);
  for (std::size_t i = 0; i < unlabeled_batch_; ++i) {
    const auto* sample = unlabeled_[pick(unlabeled_rng_)];
    auto weak = augment::weak_transform(sample->image, {}, flip(unlabeled_rng_), side);
    Image strong = augment::strong_augment(weak.view, policy_, unlabeled_rng_);
    out.push_back({std::move(weak.view), std::move(strong), weak.geometry, sample->id});
  }
  return out;
}

std::string BatchSampler::save_state() const {
  std::ostringstream out;
  out << labeled_rng_ << '\n' << unlabeled_rng_;
  return out.str();
}

void BatchSampler::restore_state(const std::string& text) {
  std::istringstream in(text);
  in >> labeled_rng_ >> unlabeled_rng_;
  if (!in) throw std::runtime_error("BatchSampler: corrupt generator state");
}

MetricsRow to_metrics_row(const eval::ApTable& table) {
  MetricsRow row;
  row.map_5095 = 100.0 * table.map_50_95;
  row.map_50 = 100.0 * table.map_50;
  for (std::size_t c = 0; c < table.per_class_mean.size(); ++c) {
    if (table.evaluated[c]) {
      row.per_class.emplace_back(100.0 * table.per_class_mean[c]);
    } else {
      row.per_class.emplace_back(std::nullopt);
    }
  }
  return row;
}

std::vector<std::vector<detector::Detection>> predict(const detector::DetectorParams& model,
                                                      std::span<const Image* const> images,
                                                      const detector::DecodeOptions& options, std::size_t batch_size) {
  diff::NoGradGuard guard;
  std::vector<std::vector<detector::Detection>> out;
  out.reserve(images.size());
  std::size_t begin = 0;
  while (begin < images.size()) {
    // Batch consecutive images of equal size.
    std::size_t end = begin + 1;
    while (end < images.size() && end - begin < batch_size && images[end]->height == images[begin]->height &&
           images[end]->width == images[begin]->width) {
      ++end;
    }
    const auto outputs = detector::forward(model, stack_images(images.subspan(begin, end - begin)));
    for (std::size_t i = 0; i < end - begin; ++i) out.push_back(detector::decode_detections(outputs, i, options));
    begin = end;
  }
  return out;
}

eval::ApTable evaluate(const detector::DetectorParams& model, const data::Dataset& dataset, const std::vector<int>& ids,
                       const detector::DecodeOptions& options, std::size_t batch_size) {
  std::vector<const Image*> images;
  std::vector<eval::ImageResult> results;
  for (int id : ids) {
    const auto& sample = dataset.by_id(id);
    images.push_back(&sample.image);
    results.push_back({{}, sample.boxes});
  }
  const auto dets = predict(model, images, options, batch_size);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (const auto& d : dets[i]) results[i].detections.push_back(d.box);
  }
  return eval::map_coco(results, model.config.num_classes);
}

double learning_rate_at(const SelfTrainConfig& config, std::size_t iteration) {
  if (config.warmup_iters == 0 || iteration >= config.warmup_iters) return config.learning_rate;
  const double t = static_cast<double>(iteration) / static_cast<double>(config.warmup_iters);
  return config.learning_rate * (0.1 + 0.9 * t);
}

TrainResult train_loop(const data::Dataset& dataset, const std::vector<int>& labeled_ids,
                       const std::vector<int>& unlabeled_ids, const std::vector<int>& val_ids,
                       const detector::DetectorConfig& detector_config, const SelfTrainConfig& config,
                       std::uint64_t seed, const LoopOptions& options) {
  config.validate();
  tune_allocator();
  if (labeled_ids.empty()) throw std::invalid_argument("train_loop: empty labeled set");
  if (val_ids.empty()) throw std::invalid_argument("train_loop: empty validation set");

  SelfTrainConfig cfg = config;
  cfg.policy.fill = dataset.channel_mean();
  BatchSampler sampler(dataset, labeled_ids, unlabeled_ids, cfg, seed);

  TrainResult result;
  TeacherStudentState state =
      TeacherStudentState::create(detector::init_detector(detector_config, derive_seed(seed, 0)), cfg);
  result.best_model = state.teacher.clone();
  double elapsed_before = 0;

  if (options.resume_from) {
    auto ck = load_checkpoint(*options.resume_from, detector_config);
    state.teacher.params = std::move(ck.teacher);
    state.teacher.params.set_requires_grad(false);
    state.student.params = std::move(ck.student);
    state.optimizer = std::move(ck.optimizer);
    state.iteration = ck.iteration;
    sampler.restore_state(ck.sampler_state);
    result.best_model.params = std::move(ck.best);
    result.best_iteration = ck.best_iteration;
    result.best_val_map = ck.best_val_map;
    result.trajectory = std::move(ck.trajectory);
    elapsed_before = ck.elapsed_seconds;
  }

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return elapsed_before + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  auto evaluate_now = [&](const detector::DetectorParams& model) {
    MetricsRow row = to_metrics_row(evaluate(model, dataset, val_ids, cfg.eval_decode, cfg.eval_batch));
    row.iteration = state.iteration;
    row.seconds = options.record_seconds ? elapsed() : 0.0;
    result.trajectory.push_back(row);
    if (row.map_5095 > result.best_val_map) {
      result.best_val_map = row.map_5095;
      result.best_iteration = state.iteration;
      result.best_model = model.clone();
    }
  };

  while (state.iteration < cfg.total_iters) {
    if (options.stop_after && state.iteration >= *options.stop_after) {
      result.finished = false;
      break;
    }
    state.optimizer.learning_rate = learning_rate_at(cfg, state.iteration);
    const bool burning_in = state.iteration < cfg.burn_in_iters;
    StepRecord record;
    if (burning_in) {
      const auto labeled = sampler.next_labeled();
      record = supervised_step(state, labeled, cfg);
      if (state.iteration == cfg.burn_in_iters) diff::copy_values(state.student.params, state.teacher.params);
    } else {
      TrainBatch batch;
      batch.labeled = sampler.next_labeled();
      if (!cfg.supervised_only) batch.unlabeled = sampler.next_unlabeled();
      record = train_step(state, batch, cfg);
    }
    if (options.on_step) options.on_step(state.iteration, record);
    if (state.iteration % cfg.eval_every == 0 || state.iteration == cfg.total_iters) {
      evaluate_now(state.iteration <= cfg.burn_in_iters ? state.student : state.teacher);
    }
    if (options.checkpoint_every > 0 && state.iteration % options.checkpoint_every == 0) {
      Checkpoint ck{state.teacher.params, state.student.params, state.optimizer, state.iteration,
                    sampler.save_state(), result.best_model.params, result.best_iteration, result.best_val_map,
                    result.trajectory, elapsed()};
      save_checkpoint(options.checkpoint_path, ck);
    }
  }
  if (cfg.burn_in_iters == 0 && cfg.total_iters == 0) result.best_model = state.teacher.clone();
  result.final_state = std::move(state);
  return result;
}

}  // namespace ssdlab::selftrain
