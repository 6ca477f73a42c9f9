#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssdlab/augment/augment.hpp"
#include "ssdlab/box.hpp"
#include "ssdlab/data/scene.hpp"
#include "ssdlab/detector/decode.hpp"
#include "ssdlab/detector/loss.hpp"
#include "ssdlab/detector/model.hpp"
#include "ssdlab/diff/optim.hpp"
#include "ssdlab/eval/metrics.hpp"
#include "ssdlab/image.hpp"

namespace ssdlab::selftrain {

struct SelfTrainConfig {
  double alpha = 0.99;       // EMA retention of the teacher
  double tau = 0.7;          // pseudo-label score threshold
  double sigma = 0.1;        // uncertainty margin of the regression gate
  double lambda_u = 2.0;     // weight of the unsupervised losses
  double background_weight = 0.5;  // unlabeled locations outside every pseudo-box
  // Such locations count as background only when the teacher's top class
  // probability is below this; less certain ones are ignored (1 = never).
  double background_max_score = 1.0;
  double pseudo_nms_iou = 0.6;

  std::size_t total_iters = 4000;
  std::size_t burn_in_iters = 400;
  std::size_t eval_every = 400;
  std::size_t labeled_batch = 4;
  std::size_t unlabeled_batch = 4;

  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t warmup_iters = 100;  // linear ramp from lr/10

  // Skip the unlabeled half entirely; with lambda_u = 0 this is bitwise the
  // same run as computing it and weighting it by zero.
  bool supervised_only = false;

  detector::FocalOptions focal;
  detector::DecodeOptions eval_decode;  // used for validation/test scoring
  augment::AugPolicy policy;
  std::size_t eval_batch = 16;

  void validate() const;
};

struct TeacherStudentState {
  detector::DetectorParams teacher;
  detector::DetectorParams student;
  diff::SgdState optimizer;
  double alpha = 0.99;
  std::size_t iteration = 0;
  std::size_t burn_in_iters = 0;
  double sigma = 0.1;
  double tau = 0.7;
  double lambda_u = 2.0;

  static TeacherStudentState create(const detector::DetectorParams& initial, const SelfTrainConfig& config);
};

struct PseudoLabel {
  Box box;                         // class id and classification score set
  std::array<double, 4> delta_t{};  // teacher per-side uncertainty (stride units)
  std::size_t source_view = 0;     // index of the weak view it came from
};

struct LabeledView {
  Image view;
  BoxList boxes;
};

struct TrainBatch {
  std::vector<LabeledView> labeled;          // strong views with ground truth
  std::vector<augment::ViewPair> unlabeled;  // weak/strong pairs
};

/// teacher <- alpha * teacher + (1 - alpha) * student, elementwise.
void ema_update(diff::ParameterSet& teacher, const diff::ParameterSet& student, double alpha);
void ema_update(TeacherStudentState& state);

/// Box localization weighting: exp(-mean(delta)) clamped to [0, 1].
double localization_weight(const std::array<double, 4>& delta);

/// Cls-only decoding of one image of precomputed teacher outputs, keeping
/// scores >= tau after NMS.
std::vector<PseudoLabel> pseudo_labels_from_outputs(const detector::HeadOutputs& teacher_outputs, std::size_t image_index,
                                                    double tau, double nms_iou);
/// Runs the teacher on a weak view without recording gradients.
std::vector<PseudoLabel> generate_pseudo_labels(const detector::DetectorParams& teacher, const Image& weak_view, double tau,
                                                double nms_iou);

/// Pseudo-box location targets for one image of the student's grid.
detector::LocationTargets pseudo_targets(std::span<const PseudoLabel> labels, const detector::GridGeometry& grid);

/// Focal loss with hard pseudo-labels. Foreground locations are weighted by
/// their box's localization weight, the rest by `background_weight` except
/// where `ignore[n][loc]` is set (weight 0); the sum is normalised by
/// max(min_normalizer, foreground count). An empty `ignore` ignores nothing.
diff::Tensor unsup_cls_loss(const detector::HeadOutputs& student, std::span<const std::vector<PseudoLabel>> labels,
                            double background_weight, const detector::FocalOptions& focal = {},
                            double min_normalizer = 1.0, std::span<const std::vector<bool>> ignore = {});

/// Per-location flags of one image: teacher top class probability >= threshold.
std::vector<bool> confident_locations(const detector::HeadOutputs& teacher_outputs, std::size_t image_index,
                                      double threshold);

/// One side of the uncertainty-gated regression term: |d_t - d_s| when
/// delta_t + sigma <= delta_s, else 0.
double gated_side_loss(double delta_t, double delta_s, double sigma, double d_t, double d_s);

/// Sum of gated per-side |d_t - d_s| over pseudo-foreground locations,
/// normalised by 4 * max(1, foreground count). Teacher values are constants.
diff::Tensor unsup_reg_loss(const detector::HeadOutputs& student, const detector::HeadOutputs& teacher,
                            std::span<const detector::LocationTargets> targets, double sigma);

struct StepRecord {
  double total = 0;
  double sup_cls = 0;
  double sup_reg = 0;
  double sup_ctr = 0;
  double sup_unc = 0;
  double unsup_cls = 0;
  double unsup_reg = 0;
  std::size_t pseudo_labels = 0;
};

/// Supervised step on the student only (burn-in phase).
StepRecord supervised_step(TeacherStudentState& state, std::span<const LabeledView> labeled, const SelfTrainConfig& config);
/// Full teacher-student step: L_sup + lambda_u (L_cls^u + L_reg^u), one SGD
/// step on the student, one EMA update of the teacher.
StepRecord train_step(TeacherStudentState& state, const TrainBatch& batch, const SelfTrainConfig& config);

/// Trains the student on labeled views for `iters` steps, then copies it into the teacher.
/// `next_batch` supplies the labeled views of each step.
template <typename Source>
void burn_in(TeacherStudentState& state, Source&& next_batch, std::size_t iters, const SelfTrainConfig& config) {
  for (std::size_t i = 0; i < iters; ++i) {
    const auto labeled = next_batch();
    supervised_step(state, labeled, config);
  }
  diff::copy_values(state.student.params, state.teacher.params);
}

/// Draws batches from the labeled and unlabeled pools with independent streams.
class BatchSampler {
 public:
  BatchSampler(const data::Dataset& dataset, std::vector<int> labeled_ids, std::vector<int> unlabeled_ids,
               const SelfTrainConfig& config, std::uint64_t seed);

  std::vector<LabeledView> next_labeled();
  std::vector<augment::ViewPair> next_unlabeled();
  bool has_unlabeled() const { return !unlabeled_.empty(); }

  std::string save_state() const;
  void restore_state(const std::string& text);

 private:
  std::vector<const data::Sample*> labeled_;
  std::vector<const data::Sample*> unlabeled_;
  augment::AugPolicy policy_;
  std::size_t labeled_batch_;
  std::size_t unlabeled_batch_;
  Rng labeled_rng_;
  Rng unlabeled_rng_;
};

struct MetricsRow {
  std::string mode;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::size_t iteration = 0;
  double map_5095 = 0;  // x100
  double map_50 = 0;    // x100
  std::vector<std::optional<double>> per_class;  // x100, empty for classes without ground truth
  double seconds = 0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

MetricsRow to_metrics_row(const eval::ApTable& table);

/// Per-image detections of a model over dataset images (native resolution).
std::vector<std::vector<detector::Detection>> predict(const detector::DetectorParams& model,
                                                      std::span<const Image* const> images,
                                                      const detector::DecodeOptions& options, std::size_t batch_size);
eval::ApTable evaluate(const detector::DetectorParams& model, const data::Dataset& dataset, const std::vector<int>& ids,
                       const detector::DecodeOptions& options, std::size_t batch_size = 16);

struct LoopOptions {
  bool record_seconds = true;
  // Write a checkpoint every `checkpoint_every` iterations (0 = never).
  std::filesystem::path checkpoint_path;
  std::size_t checkpoint_every = 0;
  // Stop after this many iterations without finishing (for resume tests).
  std::optional<std::size_t> stop_after;
  // Resume from this checkpoint instead of starting fresh.
  std::optional<std::filesystem::path> resume_from;
  // Called after every optimisation step with the completed iteration count.
  std::function<void(std::size_t, const StepRecord&)> on_step;
};

struct TrainResult {
  std::vector<MetricsRow> trajectory;  // validation evaluations
  detector::DetectorParams best_model;
  std::size_t best_iteration = 0;
  double best_val_map = -1;
  TeacherStudentState final_state;
  bool finished = true;
};

/// Burn-in, then teacher-student training. Every `eval_every` iterations the
/// current model (student during burn-in, teacher after) is scored on the
/// validation ids; the best-scoring snapshot is kept.
TrainResult train_loop(const data::Dataset& dataset, const std::vector<int>& labeled_ids,
                       const std::vector<int>& unlabeled_ids, const std::vector<int>& val_ids,
                       const detector::DetectorConfig& detector_config, const SelfTrainConfig& config,
                       std::uint64_t seed, const LoopOptions& options = {});

/// Learning rate at a given iteration (linear warmup, then constant).
double learning_rate_at(const SelfTrainConfig& config, std::size_t iteration);

}  // namespace ssdlab::selftrain
