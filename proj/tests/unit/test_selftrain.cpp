#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "ssdlab/data/scene.hpp"
#include "ssdlab/data/split.hpp"
#include "ssdlab/diff/ops.hpp"
#include "ssdlab/selftrain/selftrain.hpp"

using namespace ssdlab;
using namespace ssdlab::selftrain;
using detector::HeadOutputs;
using diff::Tensor;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

HeadOutputs constant_outputs(std::size_t batch, double cls_logit, double reg, double unc, bool requires_grad = false) {
  HeadOutputs out;
  out.grid = detector::GridGeometry::for_image(64, 64);
  out.image_height = out.image_width = 64;
  out.cls_logits = Tensor::full({batch, 3, 8, 8}, cls_logit, requires_grad);
  out.ctr_logits = Tensor::zeros({batch, 1, 8, 8});
  out.reg = Tensor::full({batch, 4, 8, 8}, reg, requires_grad);
  out.unc = Tensor::full({batch, 4, 8, 8}, unc, requires_grad);
  return out;
}

// One location of image 0 with class probability p and a 20 px square box around its centre.
void place(HeadOutputs& out, std::size_t row, std::size_t col, int cls, double p) {
  const std::size_t plane = out.grid.size(), loc = row * out.grid.cols + col;
  out.cls_logits.mutable_data()[static_cast<std::size_t>(cls) * plane + loc] = logit(p);
  for (std::size_t s = 0; s < 4; ++s) out.reg.mutable_data()[s * plane + loc] = 10.0 / detector::kStride;
}

diff::ParameterSet single_param(double v) {
  diff::ParameterSet p;
  p.entries.emplace_back("w", Tensor::from({3}, {v, -v, 2 * v}));
  return p;
}

detector::DetectorConfig small_detector() {
  detector::DetectorConfig c;
  c.backbone_channels = {8, 16, 16};
  c.head_channels = 16;
  return c;
}

SelfTrainConfig quick_config() {
  SelfTrainConfig c;
  c.total_iters = 40;
  c.burn_in_iters = 20;
  c.eval_every = 20;
  c.labeled_batch = 2;
  c.unlabeled_batch = 2;
  c.tau = 0.3;
  c.learning_rate = 0.02;
  c.warmup_iters = 5;
  return c;
}

}  // namespace

TEST_CASE("EMA endpoints and the worked example") {
  auto teacher = single_param(1.0);
  const auto student = single_param(0.25);
  const auto original = teacher.clone();
  ema_update(teacher, student, 1.0);
  CHECK(diff::max_abs_difference(teacher, original) == 0.0);
  ema_update(teacher, student, 0.0);
  CHECK(diff::max_abs_difference(teacher, student) == 0.0);

  auto t = single_param(1.0);
  ema_update(t, single_param(0.0), 0.99);
  CHECK(t[0].data()[0] == doctest::Approx(0.99).epsilon(1e-15));
  CHECK_THROWS(ema_update(t, single_param(0.0), 1.5));
}

TEST_CASE("EMA contracts the teacher-student gap by alpha") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3, 3);
  for (double alpha : {0.1, 0.5, 0.9, 0.99}) {
    diff::ParameterSet t, s;
    std::vector<double> tv(20), sv(20);
    for (auto& x : tv) x = u(rng);
    for (auto& x : sv) x = u(rng);
    t.entries.emplace_back("w", Tensor::from({20}, tv));
    s.entries.emplace_back("w", Tensor::from({20}, sv));
    ema_update(t, s, alpha);
    for (std::size_t i = 0; i < 20; ++i) {
      CHECK(std::abs(t[0].data()[i] - sv[i]) == doctest::Approx(alpha * std::abs(tv[i] - sv[i])).epsilon(1e-12));
    }
  }
}

TEST_CASE("localization weights") {
  CHECK(localization_weight({0, 0, 0, 0}) == 1.0);
  const double l2 = std::log(2.0);
  CHECK(localization_weight({l2, l2, l2, l2}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(localization_weight({0, 0, 0, 4 * l2}) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("regression gate examples") {
  CHECK(gated_side_loss(0.1, 0.5, 0.2, 3.0, 2.0) == 1.0);
  CHECK(gated_side_loss(0.6, 0.5, 0.0, 3.0, 2.0) == 0.0);
  CHECK(gated_side_loss(0.5, 0.5, 0.0, 3.0, 2.0) == 1.0);
  CHECK_THROWS(gated_side_loss(0.1, 0.5, -0.1, 3.0, 2.0));
}

TEST_CASE("pseudo-label generation") {
  SUBCASE("an untrained zero-head teacher yields nothing at tau 0.7") {
    auto teacher = detector::init_detector(small_detector(), 1);
    detector::zero_head_outputs(teacher);
    const Image view(64, 64, 0.5);
    CHECK(generate_pseudo_labels(teacher, view, 0.7, 0.6).empty());
  }
  SUBCASE("only the confident box survives the threshold") {
    auto out = constant_outputs(1, -20.0, 1.0, 0.3);
    place(out, 1, 1, 0, 0.9);
    place(out, 5, 5, 2, 0.6);
    const auto labels = pseudo_labels_from_outputs(out, 0, 0.7, 0.6);
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].box.class_id == 0);
    CHECK(*labels[0].box.score == doctest::Approx(0.9));
    CHECK(labels[0].delta_t[0] == doctest::Approx(0.3));
  }
  SUBCASE("tau 0 reproduces unthresholded decoding") {
    auto out = constant_outputs(1, -2.0, 1.0, 0.3);
    place(out, 2, 3, 1, 0.8);
    detector::DecodeOptions opts;
    opts.score_threshold = 0.0;
    opts.nms_iou = 0.6;
    const auto decoded = detector::decode_detections(out, 0, opts);
    const auto labels = pseudo_labels_from_outputs(out, 0, 0.0, 0.6);
    REQUIRE(labels.size() == decoded.size());
    for (std::size_t i = 0; i < labels.size(); ++i) CHECK(labels[i].box == decoded[i].box);
  }
}

TEST_CASE("unsupervised classification loss") {
  const auto student = constant_outputs(1, 0.3, 1.0, 0.5);
  SUBCASE("no pseudo-labels and no background term gives zero") {
    const std::vector<std::vector<PseudoLabel>> none(1);
    CHECK(unsup_cls_loss(student, none, 0.0).item() == 0.0);
  }
  SUBCASE("boxes are weighted by their localization confidence") {
    PseudoLabel a{Box{0, 0, 20, 20, 0, 0.9}, {0, 0, 0, 0}, 0};
    PseudoLabel b{Box{40, 40, 60, 60, 1, 0.9}, {0, 0, 0, 0}, 0};
    // Fix the normaliser so the three losses share a denominator.
    const double norm = 1000;
    auto loss = [&](std::vector<PseudoLabel> labels) {
      const std::vector<std::vector<PseudoLabel>> batch{std::move(labels)};
      return unsup_cls_loss(student, batch, 0.0, {}, norm).item();
    };
    const double l1 = loss({a});
    const double l2 = loss({b});
    const double l2_ = std::log(2.0);
    b.delta_t = {l2_, l2_, l2_, l2_};
    CHECK(loss({a, b}) == doctest::Approx(l1 + 0.5 * l2).epsilon(1e-12));
  }
  SUBCASE("ignored locations drop out of the background term") {
    const std::vector<std::vector<PseudoLabel>> none(1);
    const double all = unsup_cls_loss(student, none, 1.0, {}, 1000).item();
    const auto plane = student.grid.size();
    const std::vector<std::vector<bool>> keep(1, std::vector<bool>(plane, false));
    CHECK(unsup_cls_loss(student, none, 1.0, {}, 1000, keep).item() == all);
    std::vector<std::vector<bool>> half(1, std::vector<bool>(plane, false));
    for (std::size_t i = 0; i < plane / 2; ++i) half[0][i] = true;
    CHECK(unsup_cls_loss(student, none, 1.0, {}, 1000, half).item() == doctest::Approx(all / 2).epsilon(1e-12));
    const std::vector<std::vector<bool>> wrong(1, std::vector<bool>(plane + 1, false));
    CHECK_THROWS(unsup_cls_loss(student, none, 1.0, {}, 1000, wrong));
  }
  SUBCASE("the normaliser floor must be at least one") {
    const std::vector<std::vector<PseudoLabel>> none(1);
    CHECK_THROWS(unsup_cls_loss(student, none, 0.5, {}, 0.5));
  }
}

TEST_CASE("confident locations compare the top class score with the threshold") {
  auto out = constant_outputs(1, -2.0, 1.0, 0.3);
  place(out, 2, 3, 1, 0.8);
  const auto flags = confident_locations(out, 0, 0.5);
  std::size_t count = 0;
  for (bool f : flags) count += f ? 1 : 0;
  CHECK(count == 1);
  const auto none = confident_locations(out, 0, 1.0);
  CHECK(std::count(none.begin(), none.end(), true) == 0);
  const auto all = confident_locations(out, 0, 0.0);
  CHECK(std::count(all.begin(), all.end(), true) == static_cast<long>(all.size()));
}

TEST_CASE("unsupervised regression loss") {
  const auto grid = detector::GridGeometry::for_image(64, 64);
  const std::vector<detector::LocationTargets> targets{detector::assign_targets({Box{8, 8, 24, 24, 0}}, grid)};
  SUBCASE("no gradient ever reaches the teacher") {
    auto teacher = constant_outputs(1, 0.0, 2.0, 0.1, true);
    auto student = constant_outputs(1, 0.0, 1.5, 0.5, true);
    const auto loss = unsup_reg_loss(student, teacher, targets, 0.1);
    CHECK(loss.item() > 0);
    diff::backward(loss);
    CHECK_FALSE(teacher.reg.has_grad());
    CHECK_FALSE(teacher.unc.has_grad());
    CHECK(student.reg.has_grad());
  }
  SUBCASE("closed gates contribute nothing") {
    auto teacher = constant_outputs(1, 0.0, 2.0, 0.5);
    auto student = constant_outputs(1, 0.0, 1.5, 0.5);
    CHECK(unsup_reg_loss(student, teacher, targets, 0.1).item() == 0.0);
    CHECK(unsup_reg_loss(student, teacher, targets, 0.0).item() == doctest::Approx(0.5));
  }
  SUBCASE("raising sigma never opens a gate") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    auto teacher = constant_outputs(1, 0.0, 2.0, 0.3);
    auto student = constant_outputs(1, 0.0, 1.5, 0.3);
    for (auto& v : teacher.unc.mutable_data()) v = u(rng);
    for (auto& v : student.unc.mutable_data()) v = u(rng);
    double previous = INFINITY;
    for (double sigma : {0.0, 0.05, 0.1, 0.2, 0.4, 0.8}) {
      const double v = unsup_reg_loss(student, teacher, targets, sigma).item();
      CHECK(v <= previous);
      previous = v;
    }
    CHECK(previous == 0.0);
  }
  SUBCASE("the student gradient matches finite differences") {
    auto teacher = constant_outputs(1, 0.0, 2.0, 0.1);
    auto student = constant_outputs(1, 0.0, 1.5, 0.5, true);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    for (auto& v : student.reg.mutable_data()) v = u(rng);
    const auto r = ssdlab::testing::gradcheck([&] { return unsup_reg_loss(student, teacher, targets, 0.1); },
                                              {student.reg});
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("learning rate warmup") {
  SelfTrainConfig c;
  c.learning_rate = 0.1;
  c.warmup_iters = 10;
  CHECK(learning_rate_at(c, 0) == doctest::Approx(0.01));
  CHECK(learning_rate_at(c, 5) == doctest::Approx(0.055));
  CHECK(learning_rate_at(c, 10) == 0.1);
  CHECK(learning_rate_at(c, 1000) == 0.1);
}

TEST_CASE("training steps on a tiny dataset") {
  const auto ds = data::generate_dataset(data::SceneSpec::preset(3), 12);
  const std::vector<int> labeled{1, 2, 3, 4}, unlabeled{5, 6, 7, 8};
  auto cfg = quick_config();
  cfg.policy.fill = ds.channel_mean();
  const auto initial = detector::init_detector(small_detector(), 5);

  SUBCASE("zero burn-in iterations leave teacher and student at the initial weights") {
    auto state = TeacherStudentState::create(initial, cfg);
    BatchSampler sampler(ds, labeled, unlabeled, cfg, 1);
    burn_in(state, [&] { return sampler.next_labeled(); }, 0, cfg);
    CHECK(diff::max_abs_difference(state.teacher.params, initial.params) == 0.0);
    CHECK(diff::max_abs_difference(state.student.params, initial.params) == 0.0);
  }

  SUBCASE("zero unsupervised weight is bitwise a supervised step") {
    auto semi_cfg = cfg;
    semi_cfg.lambda_u = 0.0;
    semi_cfg.tau = 0.0;  // an untrained teacher sits near the prior; keep every box
    auto sup_cfg = semi_cfg;
    sup_cfg.supervised_only = true;
    auto a = TeacherStudentState::create(initial, semi_cfg);
    auto b = TeacherStudentState::create(initial, sup_cfg);
    BatchSampler sa(ds, labeled, unlabeled, semi_cfg, 2), sb(ds, labeled, unlabeled, sup_cfg, 2);
    std::size_t pseudo = 0;
    for (int i = 0; i < 3; ++i) {
      TrainBatch ba{sa.next_labeled(), sa.next_unlabeled()};
      TrainBatch bb{sb.next_labeled(), {}};
      const auto ra = train_step(a, ba, semi_cfg);
      const auto rb = train_step(b, bb, sup_cfg);
      pseudo += ra.pseudo_labels;
      CHECK(ra.total == rb.total);
    }
    CHECK(pseudo > 0);
    CHECK(diff::max_abs_difference(a.student.params, b.student.params) == 0.0);
    CHECK(diff::max_abs_difference(a.teacher.params, b.teacher.params) == 0.0);
  }

  SUBCASE("a full step reports finite non-negative components") {
    auto step_cfg = cfg;
    step_cfg.tau = 0.0;
    step_cfg.sigma = 0.0;
    auto state = TeacherStudentState::create(initial, step_cfg);
    BatchSampler sampler(ds, labeled, unlabeled, step_cfg, 3);
    TrainBatch batch{sampler.next_labeled(), sampler.next_unlabeled()};
    const auto rec = train_step(state, batch, step_cfg);
    CHECK(rec.pseudo_labels > 0);
    for (double v : {rec.sup_cls, rec.sup_reg, rec.sup_ctr, rec.sup_unc, rec.unsup_cls, rec.unsup_reg}) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
    CHECK(rec.unsup_cls > 0);
    CHECK(state.iteration == 1);
  }

  SUBCASE("sampler state round-trips") {
    BatchSampler a(ds, labeled, unlabeled, cfg, 4);
    a.next_labeled();
    a.next_unlabeled();
    BatchSampler b(ds, labeled, unlabeled, cfg, 99);
    b.restore_state(a.save_state());
    const auto la = a.next_labeled(), lb = b.next_labeled();
    REQUIRE(la.size() == lb.size());
    for (std::size_t i = 0; i < la.size(); ++i) CHECK(la[i].view == lb[i].view);
    CHECK(a.next_unlabeled()[0].strong_view == b.next_unlabeled()[0].strong_view);
  }
}

TEST_CASE("burn-in lowers the supervised loss") {
  const auto ds = data::generate_dataset(data::SceneSpec::preset(3), 50);
  auto cfg = quick_config();
  cfg.policy.fill = ds.channel_mean();
  cfg.labeled_batch = 4;
  auto state = TeacherStudentState::create(detector::init_detector(small_detector(), 6), cfg);
  BatchSampler sampler(ds, ds.ids(), {}, cfg, 6);
  const auto probe = sampler.next_labeled();
  auto loss_now = [&] {
    diff::NoGradGuard guard;
    std::vector<const Image*> views;
    std::vector<detector::LocationTargets> targets;
    for (const auto& v : probe) views.push_back(&v.view);
    const auto out = detector::forward(state.student, stack_images(std::span<const Image* const>(views)));
    for (const auto& v : probe) targets.push_back(detector::assign_targets(v.boxes, out.grid));
    return detector::supervised_loss(out, targets).total.item();
  };
  const double before = loss_now();
  burn_in(state, [&] { return sampler.next_labeled(); }, 500, cfg);
  CHECK(loss_now() < before);
  CHECK(diff::max_abs_difference(state.teacher.params, state.student.params) == 0.0);
}

TEST_CASE("training loop") {
  const auto ds = data::generate_dataset(data::SceneSpec::preset(3), 24);
  const std::vector<int> labeled{1, 2, 3, 4, 5, 6}, unlabeled{7, 8, 9, 10, 11, 12, 13, 14},
      val{15, 16, 17, 18, 19, 20, 21, 22, 23, 24};
  const auto cfg = quick_config();

  SUBCASE("a run that ends at burn-in only evaluates burn-in checkpoints") {
    auto c = cfg;
    c.total_iters = c.burn_in_iters;
    c.eval_every = 10;
    const auto r = train_loop(ds, labeled, unlabeled, val, small_detector(), c, 1, {.record_seconds = false});
    REQUIRE(r.trajectory.size() == 2);
    for (const auto& row : r.trajectory) CHECK(row.iteration <= c.burn_in_iters);
  }

  SUBCASE("the same seed reproduces the trajectory exactly") {
    LoopOptions opts;
    opts.record_seconds = false;
    const auto a = train_loop(ds, labeled, unlabeled, val, small_detector(), cfg, 3, opts);
    const auto b = train_loop(ds, labeled, unlabeled, val, small_detector(), cfg, 3, opts);
    CHECK(a.trajectory == b.trajectory);
    CHECK(diff::max_abs_difference(a.best_model.params, b.best_model.params) == 0.0);
  }

  SUBCASE("post burn-in evaluations score the teacher, not the student") {
    LoopOptions opts;
    opts.record_seconds = false;
    const auto r = train_loop(ds, labeled, unlabeled, val, small_detector(), cfg, 3, opts);
    REQUIRE(r.trajectory.back().iteration == cfg.total_iters);
    const auto teacher = evaluate(r.final_state.teacher, ds, val, cfg.eval_decode);
    const auto student = evaluate(r.final_state.student, ds, val, cfg.eval_decode);
    CHECK(to_metrics_row(teacher).map_5095 == r.trajectory.back().map_5095);
    CHECK(diff::max_abs_difference(r.final_state.teacher.params, r.final_state.student.params) > 0.0);
    CHECK(student.map_50_95 != teacher.map_50_95);
  }
}
