#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "ssdlab/detector/decode.hpp"
#include "ssdlab/detector/loss.hpp"
#include "ssdlab/detector/model.hpp"
#include "ssdlab/detector/targets.hpp"
#include "ssdlab/diff/ops.hpp"
#include "ssdlab/image.hpp"

using namespace ssdlab;
using namespace ssdlab::detector;
using diff::Tensor;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

// Hand-built head outputs for a single 64x64 image: every class logit very
// negative, unit distances and uncertainties everywhere.
HeadOutputs blank_outputs(std::size_t classes = 3) {
  HeadOutputs out;
  out.grid = GridGeometry::for_image(64, 64);
  out.image_height = 64;
  out.image_width = 64;
  out.cls_logits = Tensor::full({1, classes, 8, 8}, -20.0);
  out.ctr_logits = Tensor::zeros({1, 1, 8, 8});
  out.reg = Tensor::full({1, 4, 8, 8}, 1.0);
  out.unc = Tensor::full({1, 4, 8, 8}, 0.5);
  return out;
}

void set_location(HeadOutputs& out, std::size_t row, std::size_t col, int cls, double p, double side_pixels) {
  const std::size_t plane = out.grid.size();
  const std::size_t loc = row * out.grid.cols + col;
  out.cls_logits.mutable_data()[static_cast<std::size_t>(cls) * plane + loc] = logit(p);
  for (std::size_t s = 0; s < 4; ++s) out.reg.mutable_data()[s * plane + loc] = side_pixels / kStride;
}

Box scored(double x0, double y0, double x1, double y1, double s, int cls = 0) {
  return Box{x0, y0, x1, y1, cls, s};
}

Tensor random_image(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n * 3 * 64 * 64);
  for (auto& x : v) x = u(rng);
  return Tensor::from({n, 3, 64, 64}, std::move(v));
}

}  // namespace

TEST_CASE("forward maps a 64x64 input to an 8x8 grid per branch") {
  const auto model = init_detector(DetectorConfig{}, 1);
  const auto out = forward(model, random_image(2, 3));
  CHECK(out.cls_logits.shape() == diff::Shape{2, 3, 8, 8});
  CHECK(out.ctr_logits.shape() == diff::Shape{2, 1, 8, 8});
  CHECK(out.reg.shape() == diff::Shape{2, 4, 8, 8});
  CHECK(out.unc.shape() == diff::Shape{2, 4, 8, 8});
  for (double v : out.reg.data()) CHECK(v > 0);
  for (double v : out.unc.data()) CHECK(v > model.config.uncertainty_floor);
}

TEST_CASE("zero-initialised heads give probability one half everywhere") {
  auto model = init_detector(DetectorConfig{}, 1);
  zero_head_outputs(model);
  const auto out = forward(model, random_image(1, 4));
  for (double v : out.cls_logits.data()) CHECK(v == 0.0);
}

TEST_CASE("forward is bit-identical for a fixed seed and input") {
  const auto a = forward(init_detector(DetectorConfig{}, 7), random_image(1, 5));
  const auto b = forward(init_detector(DetectorConfig{}, 7), random_image(1, 5));
  CHECK(std::equal(a.cls_logits.data().begin(), a.cls_logits.data().end(), b.cls_logits.data().begin()));
  CHECK(std::equal(a.reg.data().begin(), a.reg.data().end(), b.reg.data().begin()));
  CHECK(std::equal(a.unc.data().begin(), a.unc.data().end(), b.unc.data().begin()));
}

TEST_CASE("forward rejects images not divisible by the stride") {
  const auto model = init_detector(DetectorConfig{}, 1);
  CHECK_THROWS(forward(model, Tensor::zeros({1, 3, 60, 64})));
}

TEST_CASE("target assignment") {
  const auto grid = GridGeometry::for_image(64, 64);
  SUBCASE("no boxes means all background") {
    const auto t = assign_targets({}, grid);
    CHECK(t.cls.size() == 64);
    CHECK(t.foreground_count() == 0);
  }
  SUBCASE("a full-image box covers every location") {
    const auto t = assign_targets({Box{0, 0, 64, 64, 1}}, grid);
    CHECK(t.foreground_count() == 64);
  }
  SUBCASE("box [8,8,24,24] claims exactly the four inner centres") {
    const auto t = assign_targets({Box{8, 8, 24, 24, 2}}, grid);
    CHECK(t.foreground_count() == 4);
    for (std::size_t r = 0; r < 8; ++r) {
      for (std::size_t c = 0; c < 8; ++c) {
        const bool inside = (r == 1 || r == 2) && (c == 1 || c == 2);
        CHECK((t.cls[r * 8 + c] == 2) == inside);
      }
    }
    // Centre (12,12): distances 4,4,12,12.
    CHECK(t.ltrb[9] == Ltrb{4, 4, 12, 12});
    CHECK(t.centerness[9] == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("overlaps resolve to the smaller box, then the lower class") {
    const auto t = assign_targets({Box{0, 0, 64, 64, 0}, Box{8, 8, 24, 24, 2}}, grid);
    CHECK(t.cls[9] == 2);
    CHECK(t.cls[0] == 0);
    const auto tie = assign_targets({Box{8, 8, 24, 24, 2}, Box{8, 8, 24, 24, 1}}, grid);
    CHECK(tie.cls[9] == 1);
  }
}

TEST_CASE("centerness target examples") {
  CHECK(centerness_target(5, 5, 5, 5) == doctest::Approx(1.0));
  CHECK(centerness_target(1, 1, 4, 4) == doctest::Approx(0.25));
  CHECK(centerness_target(2, 5, 8, 5) == doctest::Approx(0.5));
  CHECK_THROWS(centerness_target(0, 1, 1, 1));
}

TEST_CASE("focal term at p = 0.5") {
  const double expected = -0.25 * 0.25 * std::log(0.5);
  CHECK(focal_term(0.0, true, {}) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.04332).epsilon(1e-4));
}

TEST_CASE("supervised loss contracts") {
  const auto grid = GridGeometry::for_image(64, 64);
  SUBCASE("perfect regression gives a zero IoU term") {
    const auto t = assign_targets({Box{8, 8, 40, 32, 1}}, grid);
    auto out = blank_outputs();
    const auto ltrb = normalized_ltrb(std::span(&t, 1));
    out.reg = ltrb;
    const auto loss = supervised_loss(out, std::span(&t, 1));
    CHECK(loss.reg == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("all-background targets leave only the classification term") {
    const auto t = assign_targets({}, grid);
    const auto out = forward(init_detector(DetectorConfig{}, 2), random_image(1, 6));
    const auto loss = supervised_loss(out, std::span(&t, 1));
    CHECK(loss.reg == 0.0);
    CHECK(loss.ctr == 0.0);
    CHECK(loss.unc == 0.0);
    CHECK(loss.total.item() == doctest::Approx(loss.cls).epsilon(1e-14));
  }
}

TEST_CASE("the full supervised loss passes the finite-difference check") {
  const auto grid = GridGeometry::for_image(32, 32);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-1.5, 1.5), pos(0.3, 3.0);
    const std::vector<LocationTargets> targets{assign_targets({Box{2, 3, 19, 21, 0}, Box{14, 10, 30, 30, 1}}, grid),
                                               assign_targets({Box{5, 5, 28, 17, 1}}, grid)};
    auto fill = [&](diff::Shape s, auto& dist) {
      std::vector<double> v(diff::shape_numel(s));
      for (auto& x : v) x = dist(rng);
      return Tensor::from(std::move(s), std::move(v), true);
    };
    HeadOutputs out;
    out.grid = grid;
    out.image_height = out.image_width = 32;
    out.cls_logits = fill({2, 2, 4, 4}, u);
    out.ctr_logits = fill({2, 1, 4, 4}, u);
    out.reg = fill({2, 4, 4, 4}, pos);
    out.unc = fill({2, 4, 4, 4}, pos);
    const auto leaves = std::vector<Tensor>{out.cls_logits, out.ctr_logits, out.reg, out.unc};
    const auto r = ssdlab::testing::gradcheck(
        [&] { return supervised_loss(out, targets, {}, false).total; }, leaves);
    CAPTURE(r.worst);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("the uncertainty term leaves the regression gradient alone by default") {
  const auto grid = GridGeometry::for_image(32, 32);
  const std::vector<LocationTargets> targets{assign_targets({Box{2, 3, 19, 21, 0}}, grid)};
  HeadOutputs out;
  out.grid = grid;
  out.image_height = out.image_width = 32;
  out.cls_logits = Tensor::zeros({1, 2, 4, 4});
  out.ctr_logits = Tensor::zeros({1, 1, 4, 4});
  out.reg = Tensor::full({1, 4, 4, 4}, 1.0, true);
  out.unc = Tensor::full({1, 4, 4, 4}, 0.7, true);

  auto grads = [&](bool stop) {
    out.reg.zero_grad();
    out.unc.zero_grad();
    const auto loss = supervised_loss(out, targets, {}, stop);
    CHECK(loss.unc > 0);
    diff::backward(loss.total);
    return std::make_pair(out.reg.grad(), out.unc.grad());
  };
  const auto [reg_stopped, unc_stopped] = grads(true);
  const auto [reg_open, unc_open] = grads(false);
  CHECK(unc_stopped == unc_open);
  CHECK(reg_stopped != reg_open);
}

TEST_CASE("decoding") {
  DecodeOptions opts;
  opts.score_threshold = 0.05;
  SUBCASE("all probabilities below threshold decode to nothing") {
    CHECK(decode_detections(blank_outputs(), 0, opts).empty());
  }
  SUBCASE("a single confident location decodes to centre +/- distances") {
    auto out = blank_outputs();
    set_location(out, 4, 4, 1, 0.9, 10.0);
    const auto dets = decode_detections(out, 0, opts);
    REQUIRE(dets.size() == 1);
    const auto& b = dets[0].box;
    CHECK(b.x_min == doctest::Approx(26));
    CHECK(b.y_min == doctest::Approx(26));
    CHECK(b.x_max == doctest::Approx(46));
    CHECK(b.y_max == doctest::Approx(46));
    CHECK(b.class_id == 1);
    CHECK(*b.score == doctest::Approx(0.9));
    CHECK(dets[0].delta[0] == doctest::Approx(0.5));
  }
  SUBCASE("heavily overlapping same-class boxes collapse to the best") {
    auto out = blank_outputs();
    set_location(out, 4, 4, 0, 0.9, 10.0);
    set_location(out, 4, 5, 0, 0.8, 10.0);  // shifted by 8 px: IoU 240/560
    opts.nms_iou = 0.3;
    const auto dets = decode_detections(out, 0, opts);
    REQUIRE(dets.size() == 1);
    CHECK(*dets[0].box.score == doctest::Approx(0.9));
  }
  SUBCASE("centerness scoring multiplies by the square root") {
    auto out = blank_outputs();
    set_location(out, 4, 4, 1, 0.9, 10.0);
    opts.score_mode = ScoreMode::ClassSqrtCenterness;
    const auto dets = decode_detections(out, 0, opts);
    REQUIRE(dets.size() == 1);
    CHECK(*dets[0].box.score == doctest::Approx(0.9 * std::sqrt(0.5)));
  }
}

TEST_CASE("nms") {
  SUBCASE("disjoint boxes are all kept") {
    const BoxList boxes{scored(0, 0, 10, 10, 0.9), scored(20, 20, 30, 30, 0.8), scored(40, 0, 50, 10, 0.7)};
    CHECK(nms(boxes, 0.5).size() == 3);
  }
  SUBCASE("duplicates collapse to one") {
    const BoxList boxes{scored(0, 0, 10, 10, 0.9), scored(0, 0, 10, 10, 0.9)};
    CHECK(nms(boxes, 0.5).size() == 1);
  }
  SUBCASE("IoU 0.8 pair keeps the higher score") {
    // [0,0,10,10] vs [0,0,10,8]: intersection 80, union 100.
    const BoxList boxes{scored(0, 0, 10, 8, 0.8), scored(0, 0, 10, 10, 0.9)};
    REQUIRE(iou(boxes[0], boxes[1]) == doctest::Approx(0.8));
    const auto kept = nms(boxes, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(*kept[0].score == 0.9);
  }
  SUBCASE("greedy chain A-B-C keeps A and C") {
    // Unit-height strips A=[0,10], B=[0,50/3], C=[20/3,50/3].
    const Box a = scored(0, 0, 10, 1, 0.9);
    const Box b = scored(0, 0, 50.0 / 3.0, 1, 0.8);
    const Box c = scored(20.0 / 3.0, 0, 50.0 / 3.0, 1, 0.7);
    CHECK(iou(a, b) == doctest::Approx(0.6));
    CHECK(iou(a, c) == doctest::Approx(0.2));
    CHECK(iou(b, c) == doctest::Approx(0.6));
    const auto kept = nms({a, b, c}, 0.5);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0] == a);
    CHECK(kept[1] == c);
  }
  SUBCASE("different classes never suppress each other") {
    const BoxList boxes{scored(0, 0, 10, 10, 0.9, 0), scored(0, 0, 10, 10, 0.8, 1)};
    CHECK(nms(boxes, 0.5).size() == 2);
  }
}
