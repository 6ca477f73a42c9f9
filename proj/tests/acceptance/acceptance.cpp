// Acceptance suite: one PASS/FAIL line per criterion.
//
//   ssdlab_acceptance [--work-dir DIR] [--only 1,4,9]
//
// Criteria 6 and 7 share one training sweep (the expensive part, tens of
// minutes on one core); every other criterion runs in seconds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "map_oracle.hpp"
#include "ssdlab/data/coco.hpp"
#include "ssdlab/data/split.hpp"
#include "ssdlab/detector/loss.hpp"
#include "ssdlab/diff/ops.hpp"
#include "ssdlab/eval/metrics.hpp"
#include "ssdlab/harness/sweep.hpp"
#include "ssdlab/selftrain/selftrain.hpp"

namespace fs = std::filesystem;
using namespace ssdlab;
using diff::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* format, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, format, a);
  return buf;
}

Tensor random_leaf(diff::Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(diff::shape_numel(shape));
  for (auto& x : v) {
    do x = dist(rng);
    while (std::abs(x) < 0.05);
  }
  return Tensor::from(std::move(shape), std::move(v), true);
}

std::vector<double> random_weights(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(n);
  for (auto& x : w) x = dist(rng);
  return w;
}

// ---------------------------------------------------------------------------
// 1. Finite-difference gradients of every primitive and the supervised loss.

Outcome gradient_checks() {
  using namespace ssdlab::diff;
  using testing::gradcheck;
  using testing::weighted_sum;
  constexpr int kSeeds = 20;
  const auto start = std::chrono::steady_clock::now();
  double worst = 0;
  std::string worst_name;
  std::size_t checked = 0;
  auto record = [&](const char* name, const testing::GradCheckResult& r) {
    checked += r.checked;
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = name;
    }
  };

  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const auto w = random_weights(512, rng);
    auto a = random_leaf({2, 3}, rng, -2, 2), b = random_leaf({2, 3}, rng, -2, 2);
    auto pos = random_leaf({2, 3}, rng, 0.2, 3.0);
    auto m1 = random_leaf({3, 4}, rng, -2, 2), m2 = random_leaf({4, 2}, rng, -2, 2);
    auto img = random_leaf({2, 2, 5, 5}, rng, -2, 2), ker = random_leaf({3, 2, 3, 3}, rng, -2, 2);
    auto bias = random_leaf({3}, rng, -2, 2);
    auto gx = random_leaf({2, 4, 3, 3}, rng, -2, 2), gw = random_leaf({4}, rng, -2, 2), gb = random_leaf({4}, rng, -2, 2);
    auto row = random_leaf({1, 3}, rng, -2, 2);

    record("add", gradcheck([&] { return weighted_sum(add(a, b), w); }, {a, b}));
    record("sub", gradcheck([&] { return weighted_sum(sub(a, b), w); }, {a, b}));
    record("mul", gradcheck([&] { return weighted_sum(mul(a, b), w); }, {a, b}));
    record("div", gradcheck([&] { return weighted_sum(div(a, pos), w); }, {a, pos}));
    record("affine", gradcheck([&] { return weighted_sum(affine(a, -1.7, 0.3), w); }, {a}));
    record("matmul", gradcheck([&] { return weighted_sum(matmul(m1, m2), w); }, {m1, m2}));
    record("conv2d", gradcheck([&] { return weighted_sum(conv2d(img, ker, bias, {2, 1}), w); }, {img, ker, bias}));
    record("group_norm", gradcheck([&] { return weighted_sum(group_norm(gx, gw, gb, 2), w); }, {gx, gw, gb}));
    record("relu", gradcheck([&] { return weighted_sum(relu(a), w); }, {a}));
    record("sigmoid", gradcheck([&] { return weighted_sum(sigmoid(a), w); }, {a}));
    record("exp", gradcheck([&] { return weighted_sum(exp(a), w); }, {a}));
    record("log", gradcheck([&] { return weighted_sum(log(pos), w); }, {pos}));
    record("softplus", gradcheck([&] { return weighted_sum(softplus(a), w); }, {a}));
    record("reduce_sum", gradcheck([&] { return affine(reduce_sum(a), w[0]); }, {a}));
    record("reduce_mean", gradcheck([&] { return affine(reduce_mean(a), w[0]); }, {a}));
    record("broadcast", gradcheck([&] { return weighted_sum(broadcast(row, {2, 4, 3}), w); }, {row}));
    record("slice", gradcheck([&] { return weighted_sum(slice(img, 2, 1, 4), w); }, {img}));
    record("concat", gradcheck(
                         [&] {
                           const Tensor parts[] = {a, b};
                           return weighted_sum(concat(parts, 1), w);
                         },
                         {a, b}));
    record("reshape", gradcheck([&] { return weighted_sum(reshape(a, {3, 2}), w); }, {a}));
    record("minimum", gradcheck([&] { return weighted_sum(minimum(a, b), w); }, {a, b}));
    record("abs", gradcheck([&] { return weighted_sum(abs(a), w); }, {a}));

    // Full supervised loss on random head outputs with two annotated images.
    const auto grid = detector::GridGeometry::for_image(32, 32);
    const std::vector<detector::LocationTargets> targets{
        detector::assign_targets({Box{2, 3, 19, 21, 0}, Box{14, 10, 30, 30, 1}}, grid),
        detector::assign_targets({Box{5, 5, 28, 17, 1}}, grid)};
    detector::HeadOutputs out;
    out.grid = grid;
    out.image_height = out.image_width = 32;
    out.cls_logits = random_leaf({2, 2, 4, 4}, rng, -1.5, 1.5);
    out.ctr_logits = random_leaf({2, 1, 4, 4}, rng, -1.5, 1.5);
    out.reg = random_leaf({2, 4, 4, 4}, rng, 0.3, 3.0);
    out.unc = random_leaf({2, 4, 4, 4}, rng, 0.3, 3.0);
    record("supervised_loss",
           gradcheck([&] { return detector::supervised_loss(out, targets, {}, false).total; },
                     {out.cls_logits, out.ctr_logits, out.reg, out.unc}));
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = worst < 1e-4 && elapsed < 60.0;
  o.detail = std::to_string(kSeeds) + " seeds, " + std::to_string(checked) + " partials, worst rel err " +
             fmt("%.2e", worst) + " (" + worst_name + "), " + fmt("%.1fs", elapsed);
  return o;
}

// ---------------------------------------------------------------------------
// 2. EMA endpoints and contraction, exact to 1e-12.

Outcome ema_checks() {
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto teacher = detector::init_detector(detector::DetectorConfig{}, seed).params;
    const auto student = detector::init_detector(detector::DetectorConfig{}, seed + 100).params;

    auto t1 = teacher.clone();
    selftrain::ema_update(t1, student, 1.0);
    worst = std::max(worst, diff::max_abs_difference(t1, teacher));

    auto t0 = teacher.clone();
    selftrain::ema_update(t0, student, 0.0);
    worst = std::max(worst, diff::max_abs_difference(t0, student));

    for (double alpha : {0.5, 0.9, 0.99, 0.999}) {
      auto t = teacher.clone();
      selftrain::ema_update(t, student, alpha);
      for (std::size_t i = 0; i < t.size(); ++i) {
        for (std::size_t j = 0; j < t[i].numel(); ++j) {
          const double before = std::abs(teacher[i].data()[j] - student[i].data()[j]);
          const double after = std::abs(t[i].data()[j] - student[i].data()[j]);
          worst = std::max(worst, std::abs(after - alpha * before));
        }
      }
    }
  }
  return {worst <= 1e-12, "alpha=1 identity, alpha=0 copy, contraction; max deviation " + fmt("%.1e", worst)};
}

// ---------------------------------------------------------------------------
// 3. Regression gate: boundary inclusion, monotone in sigma, teacher gets no gradient.

detector::HeadOutputs filled_outputs(double reg, double unc, bool requires_grad) {
  detector::HeadOutputs out;
  out.grid = detector::GridGeometry::for_image(64, 64);
  out.image_height = out.image_width = 64;
  out.cls_logits = Tensor::zeros({2, 3, 8, 8}, requires_grad);
  out.ctr_logits = Tensor::zeros({2, 1, 8, 8}, requires_grad);
  out.reg = Tensor::full({2, 4, 8, 8}, reg, requires_grad);
  out.unc = Tensor::full({2, 4, 8, 8}, unc, requires_grad);
  return out;
}

Outcome gate_checks() {
  std::vector<std::string> failures;
  // Exact boundary: delta_t + sigma == delta_s with binary-exact values.
  if (selftrain::gated_side_loss(0.25, 0.75, 0.5, 3.0, 2.0) != 1.0) failures.push_back("boundary");
  if (selftrain::gated_side_loss(0.5, 0.5, 0.0, 3.0, 2.0) != 1.0) failures.push_back("boundary sigma 0");
  if (selftrain::gated_side_loss(0.6, 0.5, 0.0, 3.0, 2.0) != 0.0) failures.push_back("closed gate");

  const auto grid = detector::GridGeometry::for_image(64, 64);
  const std::vector<detector::LocationTargets> targets{
      detector::assign_targets({Box{4, 4, 40, 30, 0}, Box{30, 30, 60, 60, 2}}, grid),
      detector::assign_targets({Box{8, 8, 56, 48, 1}}, grid)};
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unc(0.05, 1.0), reg(0.5, 4.0);
  std::size_t monotone_violations = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto teacher = filled_outputs(1.0, 0.5, false);
    auto student = filled_outputs(1.0, 0.5, false);
    for (auto& v : teacher.unc.mutable_data()) v = unc(rng);
    for (auto& v : student.unc.mutable_data()) v = unc(rng);
    for (auto& v : teacher.reg.mutable_data()) v = reg(rng);
    for (auto& v : student.reg.mutable_data()) v = reg(rng);
    double previous = INFINITY;
    for (double sigma = 0.0; sigma <= 1.0; sigma += 0.05) {
      const double v = selftrain::unsup_reg_loss(student, teacher, targets, sigma).item();
      if (v > previous) ++monotone_violations;
      previous = v;
    }
  }
  if (monotone_violations) failures.push_back(std::to_string(monotone_violations) + " sigma-monotonicity violations");

  // Teacher outputs that would accept gradients must still receive none.
  auto teacher = filled_outputs(2.0, 0.1, true);
  auto student = filled_outputs(1.5, 0.6, true);
  const auto loss = selftrain::unsup_reg_loss(student, teacher, targets, 0.2);
  diff::backward(loss);
  double teacher_grad = 0;
  for (const Tensor* t : {&teacher.reg, &teacher.unc, &teacher.cls_logits}) {
    for (double g : t->grad()) teacher_grad = std::max(teacher_grad, std::abs(g));
  }
  if (teacher_grad != 0.0) failures.push_back("teacher gradient " + fmt("%.3g", teacher_grad));
  if (!(loss.item() > 0) || !student.reg.has_grad()) failures.push_back("student not trained by the gate");

  if (failures.empty()) return {true, "boundary open, monotone over 50 random cases, teacher gradient 0"};
  std::string detail;
  for (const auto& f : failures) detail += (detail.empty() ? "" : "; ") + f;
  return {false, detail};
}

// ---------------------------------------------------------------------------
// 4. COCO mAP against the brute-force oracle.

Outcome map_oracle_checks() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(4242);
  double worst = 0;
  int instances = 0;
  while (instances < 200) {
    std::uniform_int_distribution<int> n_images(1, 5), n_dets(0, 10), n_gts(0, 5), cls(0, 2);
    std::uniform_real_distribution<double> pos(0, 48), size(3, 24), score(0, 1), jitter(-3, 3);
    std::vector<eval::ImageResult> images(static_cast<std::size_t>(n_images(rng)));
    std::vector<testing::OracleImage> oracle(images.size());
    bool any_gt = false;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const int ng = n_gts(rng), nd = n_dets(rng);
      for (int g = 0; g < ng; ++g) {
        const double x = pos(rng), y = pos(rng);
        images[i].ground_truth.push_back(Box{x, y, x + size(rng), y + size(rng), cls(rng), std::nullopt});
        any_gt = true;
      }
      for (int d = 0; d < nd; ++d) {
        Box b;
        if (!images[i].ground_truth.empty() && d % 3 != 2) {
          // Perturbed copy of a ground-truth box: IoUs spread across the thresholds.
          b = images[i].ground_truth[static_cast<std::size_t>(d) % images[i].ground_truth.size()];
          b.x_min += jitter(rng);
          b.y_min += jitter(rng);
          b.x_max = std::max(b.x_min + 1, b.x_max + jitter(rng));
          b.y_max = std::max(b.y_min + 1, b.y_max + jitter(rng));
          if (d % 5 == 4) b.class_id = cls(rng);
        } else {
          const double x = pos(rng), y = pos(rng);
          b = Box{x, y, x + size(rng), y + size(rng), cls(rng), std::nullopt};
        }
        b.score = score(rng);
        images[i].detections.push_back(b);
      }
      for (const auto& b : images[i].ground_truth) oracle[i].gts.push_back({b.x_min, b.y_min, b.x_max, b.y_max, b.class_id, 0});
      for (const auto& b : images[i].detections) {
        oracle[i].dets.push_back({b.x_min, b.y_min, b.x_max, b.y_max, b.class_id, *b.score});
      }
    }
    if (!any_gt) continue;
    ++instances;
    const double fast = eval::map_coco(images, 3).map_50_95;
    worst = std::max(worst, std::abs(fast - testing::oracle_map(oracle, 3)));
  }
  const double hand = eval::average_precision(eval::build_curve({true, false, true}, 2));
  const double expected = (51 * 1.0 + 50 * (2.0 / 3.0)) / 101.0;
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = worst <= 1e-9 && std::abs(hand - expected) <= 1e-12 && std::abs(hand - 0.8350) < 5e-5 && elapsed < 60;
  o.detail = "200 instances, max |diff| " + fmt("%.1e", worst) + ", [TP,FP,TP] AP " + fmt("%.4f", hand) + ", " +
             fmt("%.1fs", elapsed);
  return o;
}

// ---------------------------------------------------------------------------
// 5. Zero unsupervised weight reproduces the supervised run bitwise.

Outcome zero_weight_identity() {
  auto spec = data::SceneSpec::preset(3);
  spec.seed = 5;
  const auto ds = data::generate_dataset(spec, 40);
  std::vector<int> labeled, unlabeled, val;
  for (int id = 1; id <= 40; ++id) (id <= 8 ? labeled : id <= 30 ? unlabeled : val).push_back(id);

  selftrain::SelfTrainConfig semi;
  semi.total_iters = 200;
  semi.burn_in_iters = 50;
  semi.eval_every = 50;
  semi.lambda_u = 0.0;
  semi.tau = 0.0;  // keep pseudo-labels and gates active so the unlabeled half really runs
  auto supervised = semi;
  supervised.supervised_only = true;

  detector::DetectorConfig det;
  std::size_t pseudo = 0;
  selftrain::LoopOptions semi_opts;
  semi_opts.record_seconds = false;
  semi_opts.on_step = [&](std::size_t, const selftrain::StepRecord& r) { pseudo += r.pseudo_labels; };
  selftrain::LoopOptions sup_opts;
  sup_opts.record_seconds = false;
  const auto a = selftrain::train_loop(ds, labeled, unlabeled, val, det, semi, 9, semi_opts);
  const auto b = selftrain::train_loop(ds, labeled, {}, val, det, supervised, 9, sup_opts);
  const double dt = diff::max_abs_difference(a.final_state.teacher.params, b.final_state.teacher.params);
  const double ds_ = diff::max_abs_difference(a.final_state.student.params, b.final_state.student.params);
  const bool same_metrics = a.trajectory == b.trajectory;
  Outcome o;
  o.pass = dt == 0.0 && ds_ == 0.0 && same_metrics && pseudo > 0;
  o.detail = "200 iterations, " + std::to_string(pseudo) + " pseudo-labels seen, teacher diff " + fmt("%.1e", dt) +
             ", student diff " + fmt("%.1e", ds_) + (same_metrics ? ", metrics identical" : ", metrics differ");
  return o;
}

// ---------------------------------------------------------------------------
// 6/7. The label-fraction sweep.

struct SweepCache {
  std::vector<selftrain::MetricsRow> rows;
  double seconds = 0;
  bool ran = false;
};

double mean_for(const std::vector<selftrain::MetricsRow>& rows, const std::string& mode, double fraction) {
  double sum = 0;
  int n = 0;
  for (const auto& r : rows) {
    if (r.mode == mode && std::abs(r.fraction - fraction) < 1e-12) {
      sum += r.map_5095;
      ++n;
    }
  }
  return n ? sum / n : NAN;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (static_cast<double>(i + j) / 2.0) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

const SweepCache& fraction_sweep(const fs::path& work_dir) {
  static SweepCache cache;
  if (cache.ran) return cache;
  cache.ran = true;
  const auto start = std::chrono::steady_clock::now();
  auto log = [](const std::string& line) { std::fprintf(stderr, "  %s\n", line.c_str()); };

  harness::ExperimentConfig sup;  // shipped defaults: 3 classes, 600 train images, seeds 1-3
  sup.modes = {harness::Mode::Supervised};
  sup.fractions = {0.05, 0.10, 0.20, 0.50, 1.00};
  sup.output_dir = work_dir / "fraction_sweep_supervised";
  const auto a = harness::run_sweep(sup, {.write_files = true, .log = log});

  auto semi = sup;
  semi.modes = {harness::Mode::Semi};
  semi.fractions = {0.10, 0.20};
  semi.output_dir = work_dir / "fraction_sweep_semi";
  const auto b = harness::run_sweep(semi, {.write_files = true, .log = log});

  cache.rows = a.test_rows;
  cache.rows.insert(cache.rows.end(), b.test_rows.begin(), b.test_rows.end());
  cache.seconds = seconds_since(start);
  const auto cells = harness::summarize(cache.rows);
  std::fprintf(stderr, "%s", harness::render_summary_markdown(cells).c_str());
  return cache;
}

Outcome fraction_ordering(const fs::path& work_dir) {
  const auto& sweep = fraction_sweep(work_dir);
  const std::vector<double> fractions{0.05, 0.10, 0.20, 0.50, 1.00};
  std::vector<double> sup;
  for (double f : fractions) sup.push_back(mean_for(sweep.rows, "supervised", f));
  const double rho = spearman(fractions, sup);
  const double gain10 = mean_for(sweep.rows, "semi", 0.10) - sup[1];
  const double gain20 = mean_for(sweep.rows, "semi", 0.20) - sup[2];
  Outcome o;
  o.pass = rho == 1.0 && gain10 >= 2.0 && gain20 >= 2.0 && sweep.seconds < 3600;
  std::string curve;
  for (double v : sup) curve += (curve.empty() ? "" : "/") + fmt("%.2f", v);
  o.detail = "supervised " + curve + " (Spearman " + fmt("%.2f", rho) + "), semi gain " + fmt("%+.2f", gain10) +
             " @10%, " + fmt("%+.2f", gain20) + " @20%, sweep " + fmt("%.0fs", sweep.seconds);
  return o;
}

Outcome label_efficiency(const fs::path& work_dir) {
  const auto& sweep = fraction_sweep(work_dir);
  const double semi10 = mean_for(sweep.rows, "semi", 0.10);
  const double sup100 = mean_for(sweep.rows, "supervised", 1.00);
  return {semi10 >= 0.7 * sup100,
          "semi@10% " + fmt("%.2f", semi10) + " vs 70% of supervised@100% = " + fmt("%.2f", 0.7 * sup100)};
}

// ---------------------------------------------------------------------------
// 8. Reproducibility: rerun, resume and COCO round trip.

harness::ExperimentConfig small_sweep_config(const fs::path& dir) {
  harness::ExperimentConfig c;
  c.train_images = 40;
  c.selftrain.total_iters = 120;
  c.selftrain.burn_in_iters = 40;
  c.selftrain.eval_every = 40;
  c.fractions = {0.25};
  c.seeds = {1, 2};
  c.record_seconds = false;
  c.output_dir = dir;
  return c;
}

Outcome reproducibility(const fs::path& work_dir) {
  std::vector<std::string> failures;

  // Same config twice: every CSV byte-identical.
  const auto d1 = work_dir / "repro_a", d2 = work_dir / "repro_b";
  fs::remove_all(d1);
  fs::remove_all(d2);
  harness::run_sweep(small_sweep_config(d1));
  harness::run_sweep(small_sweep_config(d2));
  for (const char* f : {"metrics.csv", "curves.csv", "summary.csv", "summary.md", "per_class.md"}) {
    if (data::read_text_file(d1 / f) != data::read_text_file(d2 / f)) failures.push_back(std::string(f) + " differs");
  }

  // Interrupted + resumed run equals the uninterrupted one.
  const auto cfg = small_sweep_config(work_dir / "resume");
  const auto ws = harness::build_workspace(cfg);
  const auto ck = work_dir / "resume.ckpt";
  fs::remove(ck);
  selftrain::LoopOptions straight;
  const auto full = harness::run_single(cfg, ws, harness::Mode::Semi, 0.25, 1, straight);
  selftrain::LoopOptions first;
  first.checkpoint_path = ck;
  first.checkpoint_every = 20;
  first.stop_after = 60;
  harness::run_single(cfg, ws, harness::Mode::Semi, 0.25, 1, first);
  selftrain::LoopOptions second;
  second.resume_from = ck;
  const auto resumed = harness::run_single(cfg, ws, harness::Mode::Semi, 0.25, 1, second);
  if (!(resumed.test == full.test)) failures.push_back("resumed test metrics differ");
  if (resumed.curve != full.curve) failures.push_back("resumed validation curve differs");
  if (diff::max_abs_difference(resumed.training.final_state.teacher.params, full.training.final_state.teacher.params) !=
      0.0) {
    failures.push_back("resumed teacher differs");
  }

  // COCO ground truth and results: write, read, write is byte-identical.
  const auto doc = data::to_coco(ws.dataset);
  const auto text = data::write_coco(doc);
  if (data::write_coco(data::read_coco(text)) != text) failures.push_back("COCO annotations not stable");
  std::vector<data::DetectionRecord> records;
  const auto preds = selftrain::predict(full.training.best_model, [&] {
    std::vector<const Image*> v;
    for (int id : ws.split.test) v.push_back(&ws.dataset.by_id(id).image);
    return v;
  }(), detector::DecodeOptions{}, 16);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (const auto& d : preds[i]) records.push_back({ws.split.test[i], d.box});
  }
  const auto results = data::write_results(doc, records);
  if (data::write_results(doc, data::read_results(doc, results)) != results) failures.push_back("COCO results not stable");

  if (failures.empty()) {
    return {true, "rerun CSVs identical, resume from iteration 60 identical, COCO round trip stable (" +
                      std::to_string(records.size()) + " detections)"};
  }
  std::string detail;
  for (const auto& f : failures) detail += (detail.empty() ? "" : "; ") + f;
  return {false, detail};
}

// ---------------------------------------------------------------------------
// 9. Split sizes and nested label fractions.

Outcome split_checks() {
  std::vector<int> ids(848);
  for (int i = 0; i < 848; ++i) ids[static_cast<std::size_t>(i)] = i + 1;
  bool sizes = true, nested = true, disjoint = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = data::split_dataset(ids, {0.65, 0.20, 0.15}, seed);
    sizes = sizes && s.train.size() == 550 && s.val.size() == 170 && s.test.size() == 128;
    std::set<int> all(s.train.begin(), s.train.end());
    all.insert(s.val.begin(), s.val.end());
    all.insert(s.test.begin(), s.test.end());
    disjoint = disjoint && all.size() == 848;
    for (std::uint64_t label_seed = 1; label_seed <= 3; ++label_seed) {
      std::set<int> previous;
      for (double f : {0.05, 0.10, 0.20, 0.50, 1.00}) {
        const auto l = data::sample_label_fraction(s, f, label_seed);
        const std::set<int> current(l.labeled.begin(), l.labeled.end());
        nested = nested && std::includes(current.begin(), current.end(), previous.begin(), previous.end()) &&
                 l.labeled.size() + l.unlabeled.size() == 550;
        previous = current;
      }
    }
  }
  return {sizes && nested && disjoint, std::string("848 ids -> 550/170/128") + (sizes ? "" : " (WRONG SIZES)") +
                                           (disjoint ? ", partition" : ", overlap!") +
                                           (nested ? ", fractions nest" : ", fractions do not nest")};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  fs::path work_dir = fs::temp_directory_path() / "ssdlab_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work-dir" && i + 1 < argc) {
      work_dir = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      std::fprintf(stderr, "usage: %s [--work-dir DIR] [--only 1,2,...]\n", argv[0]);
      return 2;
    }
  }
  fs::create_directories(work_dir);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"finite-difference gradients", gradient_checks},
      {"EMA update", ema_checks},
      {"uncertainty gate", gate_checks},
      {"mAP oracle equivalence", map_oracle_checks},
      {"zero unsupervised weight identity", zero_weight_identity},
      {"label-fraction ordering and semi gain", [&] { return fraction_ordering(work_dir); }},
      {"semi@10% reaches 70% of supervised@100%", [&] { return label_efficiency(work_dir); }},
      {"reproducibility", [&] { return reproducibility(work_dir); }},
      {"split sizes and nesting", split_checks},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(number)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("criterion %d %s: %s - %s\n", number, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
