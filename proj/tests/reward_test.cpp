#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "oracles.hpp"
#include "zoomrl/reward.hpp"
#include "zoomrl/rng.hpp"

using namespace zoomrl;

namespace {

BBox random_box(Rng& rng, int w, int h) {
  const int x1 = static_cast<int>(rng.uniform_int(w));
  const int x2 = static_cast<int>(rng.uniform_range(x1, w - 1));
  const int y1 = static_cast<int>(rng.uniform_int(h));
  const int y2 = static_cast<int>(rng.uniform_range(y1, h - 1));
  return BBox(x1, y1, x2, y2);
}

}  // namespace

TEST_CASE("r_format") {
  CHECK(r_format(true) == 1.0);
  CHECK(r_format(false) == 0.0);
}

TEST_CASE("r_no_overlap") {
  const std::vector<BBox> one = {BBox(0, 0, 9, 9)};
  CHECK(r_no_overlap(one, 0.3) == 1.0);
  const std::vector<BBox> disjoint = {BBox(0, 0, 9, 9), BBox(20, 20, 29, 29)};
  CHECK(r_no_overlap(disjoint, 0.3) == 1.0);
  // IoU 1/3 > 0.3
  const std::vector<BBox> touching = {BBox(0, 0, 9, 9), BBox(5, 0, 14, 9)};
  CHECK(r_no_overlap(touching, 0.3) == 0.0);
  CHECK(r_no_overlap(touching, 1.0 / 3.0 + 1e-9) == 1.0);
}

TEST_CASE("r_area") {
  const std::vector<BBox> boundary = {BBox(0, 0, 99, 99)};  // ratio exactly 0.01
  CHECK(r_area(boundary, 1000, 1000, 0.01, 0.5) == 1.0);
  const std::vector<BBox> tiny = {BBox(0, 0, 4, 4)};  // 2.5e-5
  CHECK(r_area(tiny, 1000, 1000, 0.01, 0.5) == 0.0);
  const std::vector<BBox> full = {BBox(0, 0, 999, 999)};  // 1.0 > 0.5
  CHECK(r_area(full, 1000, 1000, 0.01, 0.5) == 0.0);
}

TEST_CASE("r_coverage_mask") {
  BitMask mask(40, 40);
  mask.fill_box(BBox(0, 0, 19, 39), true);
  const std::vector<BBox> inside = {BBox(0, 0, 9, 9), BBox(10, 10, 19, 19)};
  CHECK(r_coverage_mask(inside, mask, 0.5) == 1.0);
  const std::vector<BBox> outside = {BBox(25, 0, 34, 9)};
  CHECK(r_coverage_mask(outside, mask, 0.5) == 0.0);
  CHECK(r_coverage_mask({}, mask, 0.5) == 0.0);

  // densities 0.8, 0.4, 0.6 at theta 0.5 -> 2/3
  BitMask gt(10, 30);
  gt.fill_box(BBox(0, 0, 7, 0), true);    // row 0: 8 of 10
  gt.fill_box(BBox(0, 10, 3, 10), true);  // row 10: 4 of 10
  gt.fill_box(BBox(0, 20, 5, 20), true);  // row 20: 6 of 10
  const std::vector<BBox> rows = {BBox(0, 0, 9, 0), BBox(0, 10, 9, 10), BBox(0, 20, 9, 20)};
  CHECK(r_coverage_mask(rows, gt, 0.5) == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("r_coverage_gtbox") {
  const std::vector<BBox> gts = {BBox(0, 0, 9, 9), BBox(20, 0, 29, 9), BBox(40, 0, 49, 9),
                                 BBox(60, 0, 69, 9)};
  CHECK(r_coverage_gtbox(gts, gts, 0.5) == 1.0);
  const std::vector<BBox> far = {BBox(0, 50, 9, 59)};
  CHECK(r_coverage_gtbox(far, gts, 0.5) == 0.0);
  // exactly 3 of 4 matched
  const std::vector<BBox> three = {BBox(0, 0, 9, 9), BBox(20, 0, 29, 9), BBox(40, 0, 49, 9)};
  CHECK(r_coverage_gtbox(three, gts, 0.5) == 0.75);
  CHECK(r_coverage_gtbox(three, {}, 0.5) == 1.0);
  CHECK(r_coverage_gtbox({}, gts, 0.5) == 0.0);
}

TEST_CASE("r_coverage_maskmask") {
  BitMask a(30, 10), b(30, 10);
  a.fill_box(BBox(0, 0, 9, 9), true);
  b.fill_box(BBox(5, 0, 14, 9), true);
  CHECK(r_coverage_maskmask(a, b, false) == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(r_coverage_maskmask(a, b, true) == Catch::Approx(0.5).epsilon(1e-12));
  BitMask other(10, 10);
  CHECK_THROWS_AS(r_coverage_maskmask(a, other, true), std::invalid_argument);
}

TEST_CASE("heuristic_total composition") {
  HeuristicConfig cfg;

  SECTION("all components 1 with unit weights sums to 4") {
    const std::vector<BBox> boxes = {BBox(0, 0, 39, 39)};  // ratio 0.0156 within bounds on 320x320
    const std::vector<BBox> gts = {BBox(0, 0, 39, 39)};
    HeuristicInputs in;
    in.format_ok = true;
    in.boxes = boxes;
    in.frame_w = 320;
    in.frame_h = 320;
    in.gt_boxes = gts;
    in.has_gt_boxes = true;
    const RewardBreakdown r = heuristic_total(in, cfg);
    CHECK(r.r_format == 1.0);
    CHECK(r.r_no_overlap == 1.0);
    CHECK(r.r_area == 1.0);
    CHECK(r.r_coverage == 1.0);
    CHECK(r.heuristic_total == 4.0);
  }

  SECTION("format failure zeroes every component") {
    HeuristicInputs in;
    in.format_ok = false;
    in.frame_w = 100;
    in.frame_h = 100;
    in.has_gt_boxes = true;
    const RewardBreakdown r = heuristic_total(in, cfg);
    CHECK(r.r_format == 0.0);
    CHECK(r.r_no_overlap == 0.0);
    CHECK(r.r_area == 0.0);
    CHECK(r.r_coverage == 0.0);
    CHECK(r.heuristic_total == 0.0);
  }

  SECTION("weighted sum respects lambda") {
    cfg.lambda = {1.0, 1.0, 1.0, 2.0};
    const std::vector<BBox> boxes = {BBox(0, 0, 39, 39)};
    const std::vector<BBox> gts = {BBox(0, 0, 39, 39), BBox(200, 200, 239, 239)};
    HeuristicInputs in;
    in.format_ok = true;
    in.boxes = boxes;
    in.frame_w = 320;
    in.frame_h = 320;
    in.gt_boxes = gts;
    in.has_gt_boxes = true;
    const RewardBreakdown r = heuristic_total(in, cfg);
    CHECK(r.r_coverage == 0.5);
    CHECK(r.heuristic_total == Catch::Approx(1 + 1 + 1 + 2.0 * 0.5).epsilon(1e-12));
  }

  SECTION("mask mode preferred over gt boxes, mask-to-mask over both") {
    BitMask gt_mask(100, 100);
    gt_mask.fill_box(BBox(0, 0, 49, 99), true);
    const std::vector<BBox> boxes = {BBox(0, 0, 19, 19)};  // fully inside mask
    const std::vector<BBox> gts = {BBox(80, 80, 89, 89)};  // would give coverage 0
    HeuristicInputs in;
    in.format_ok = true;
    in.boxes = boxes;
    in.frame_w = 100;
    in.frame_h = 100;
    in.gt_mask = &gt_mask;
    in.gt_boxes = gts;
    in.has_gt_boxes = true;
    CHECK(heuristic_total(in, cfg).r_coverage == 1.0);

    BitMask pred = gt_mask;
    in.pred_mask = &pred;
    CHECK(heuristic_total(in, cfg).r_coverage == 1.0);  // dice(pred, gt) = 1

    cfg.coverage_weights = std::array<double, 3>{1.0, 1.0, 0.0};
    const RewardBreakdown r = heuristic_total(in, cfg);
    CHECK(r.r_coverage == 0.5);  // mean of mask mode 1.0 and gt-box mode 0.0
  }
}

TEST_CASE("r_no_overlap and r_area are permutation invariant") {
  Rng rng(5);
  HeuristicConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    const int w = static_cast<int>(rng.uniform_range(8, 64));
    const int h = static_cast<int>(rng.uniform_range(8, 64));
    std::vector<BBox> boxes;
    const int n = static_cast<int>(rng.uniform_range(1, 5));
    for (int i = 0; i < n; ++i) boxes.push_back(random_box(rng, w, h));
    std::vector<BBox> shuffled = boxes;
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[rng.uniform_int(i)]);
    CHECK(r_no_overlap(boxes, cfg.tau) == r_no_overlap(shuffled, cfg.tau));
    CHECK(r_area(boxes, w, h, cfg.r_min, cfg.r_max) == r_area(shuffled, w, h, cfg.r_min, cfg.r_max));
  }
}

TEST_CASE("adding a matching proposal never lowers gt-box coverage") {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = 64, h = 64;
    std::vector<BBox> gts, props;
    const int ng = static_cast<int>(rng.uniform_range(1, 5));
    for (int i = 0; i < ng; ++i) gts.push_back(random_box(rng, w, h));
    const int np = static_cast<int>(rng.uniform_int(4));
    for (int i = 0; i < np; ++i) props.push_back(random_box(rng, w, h));
    const double before = r_coverage_gtbox(props, gts, 0.5);
    props.push_back(gts[rng.uniform_int(gts.size())]);  // exact match, IoU 1
    const double after = r_coverage_gtbox(props, gts, 0.5);
    REQUIRE(after >= before);
  }
}

TEST_CASE("heuristic components equal the pixel-counting oracle on random scenes") {
  Rng rng(2024);
  HeuristicConfig cfg;
  for (int scene = 0; scene < 200; ++scene) {
    const int w = static_cast<int>(rng.uniform_range(8, 64));
    const int h = static_cast<int>(rng.uniform_range(8, 64));
    std::vector<BBox> boxes, gts;
    const int nb = static_cast<int>(rng.uniform_range(1, 4));
    const int ng = static_cast<int>(rng.uniform_range(1, 6));
    for (int i = 0; i < nb; ++i) boxes.push_back(random_box(rng, w, h));
    for (int i = 0; i < ng; ++i) gts.push_back(random_box(rng, w, h));
    BitMask gt_mask(w, h);
    for (const auto& g : gts) gt_mask.fill_box(g, true);

    REQUIRE(r_no_overlap(boxes, cfg.tau) == oracle::no_overlap_pixels(boxes, w, h, cfg.tau));
    REQUIRE(r_area(boxes, w, h, cfg.r_min, cfg.r_max) ==
            oracle::area_pixels(boxes, w, h, cfg.r_min, cfg.r_max));
    REQUIRE(r_coverage_mask(boxes, gt_mask, cfg.theta) ==
            oracle::coverage_mask_pixels(boxes, gt_mask, cfg.theta));
    REQUIRE(r_coverage_gtbox(boxes, gts, cfg.delta) ==
            oracle::coverage_gtbox_pixels(boxes, gts, w, h, cfg.delta));
  }
}

TEST_CASE("heuristic_total is deterministic") {
  HeuristicConfig cfg;
  const std::vector<BBox> boxes = {BBox(1, 2, 30, 40), BBox(32, 2, 61, 40)};
  const std::vector<BBox> gts = {BBox(5, 5, 14, 14)};
  HeuristicInputs in;
  in.format_ok = true;
  in.boxes = boxes;
  in.frame_w = 200;
  in.frame_h = 200;
  in.gt_boxes = gts;
  in.has_gt_boxes = true;
  const RewardBreakdown a = heuristic_total(in, cfg);
  const RewardBreakdown b = heuristic_total(in, cfg);
  CHECK(a.r_format == b.r_format);
  CHECK(a.r_no_overlap == b.r_no_overlap);
  CHECK(a.r_area == b.r_area);
  CHECK(a.r_coverage == b.r_coverage);
  CHECK(a.heuristic_total == b.heuristic_total);
}

TEST_CASE("config validation") {
  HeuristicConfig bad;
  bad.tau = 1.0;
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
  bad = {};
  bad.r_min = 0.6;
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
  bad = {};
  bad.lambda[2] = -1.0;
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
}
