#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "psi/error.hpp"
#include "psi/metrics.hpp"
#include "psi/stats.hpp"

using namespace psi;

TEST_CASE("flow comparison counts only unmasked patches with an inclusive tolerance") {
  Grid<Vec2> pred(2, 2);
  pred.at(0, 0) = {2, 0};
  pred.at(0, 1) = {0, 0};
  pred.at(1, 0) = {1, 1};
  pred.at(1, 1) = {5, 0};
  Grid<Vec2> gt(2, 2);
  gt.at(0, 0) = {2, 0};
  gt.at(0, 1) = {0, 1};
  gt.at(1, 0) = {0, 0};
  gt.at(1, 1) = {0, 0};
  // Endpoint errors per patch: 0, 1, sqrt(2), 5.

  FlowEval ev = eval_flow(pred, nullptr, gt, 1.0);
  CHECK(ev.compared == 4);
  CHECK_FALSE(ev.degenerate);
  CHECK(ev.accuracy == 0.5);  // epe == tol counts as a hit
  CHECK(ev.epe == doctest::Approx((0.0 + 1.0 + std::sqrt(2.0) + 5.0) / 4.0)
                      .epsilon(1e-12));

  // The boundary is inclusive even for irrational errors.
  FlowEval at_sqrt2 = eval_flow(pred, nullptr, gt, std::sqrt(2.0));
  CHECK(at_sqrt2.accuracy == 0.75);

  Grid<uint8_t> valid(2, 2, 0);
  valid.at(0, 0) = 1;
  valid.at(1, 1) = 1;
  FlowEval masked = eval_flow(pred, &valid, gt, 1.0);
  CHECK(masked.compared == 2);
  CHECK(masked.accuracy == 0.5);
  CHECK(masked.epe == 2.5);

  Grid<uint8_t> none(2, 2, 0);
  FlowEval empty = eval_flow(pred, &none, gt, 1.0);
  CHECK(empty.degenerate);
  CHECK(empty.compared == 0);
  CHECK(empty.accuracy == 0.0);
  CHECK(empty.epe == 0.0);

  Grid<Vec2> wide(2, 3);
  CHECK_THROWS_AS(eval_flow(pred, nullptr, wide, 1.0), ShapeError);
  Grid<uint8_t> tall(3, 2, 1);
  CHECK_THROWS_AS(eval_flow(pred, &tall, gt, 1.0), ShapeError);
}

TEST_CASE("mask iou handles empty and partial overlap exactly") {
  Grid<uint8_t> pred(2, 2, 0);
  pred.at(0, 0) = 1;
  pred.at(0, 1) = 1;
  Grid<uint8_t> gt(2, 2, 0);
  gt.at(0, 0) = 1;
  gt.at(1, 0) = 1;
  IouEval partial = eval_mask_iou(pred, gt);
  CHECK(partial.iou == 1.0 / 3.0);
  CHECK_FALSE(partial.degenerate);

  CHECK(eval_mask_iou(pred, pred).iou == 1.0);

  Grid<uint8_t> disjoint(2, 2, 0);
  disjoint.at(1, 1) = 1;
  IouEval miss = eval_mask_iou(pred, disjoint);
  CHECK(miss.iou == 0.0);
  CHECK_FALSE(miss.degenerate);

  // Any nonzero value marks membership, not just 1.
  Grid<uint8_t> sevens(2, 2, 0);
  sevens.at(0, 0) = 7;
  sevens.at(0, 1) = 7;
  CHECK(eval_mask_iou(sevens, pred).iou == 1.0);

  Grid<uint8_t> blank(2, 2, 0);
  IouEval both_empty = eval_mask_iou(blank, blank);
  CHECK(both_empty.iou == 1.0);
  CHECK(both_empty.degenerate);

  IouEval one_empty = eval_mask_iou(blank, gt);
  CHECK(one_empty.iou == 0.0);
  CHECK_FALSE(one_empty.degenerate);

  Grid<uint8_t> wrong(3, 2, 0);
  CHECK_THROWS_AS(eval_mask_iou(pred, wrong), ShapeError);
}

TEST_CASE("depth ranking correlates unmasked patches only") {
  DepthResult pred;
  pred.z = Grid<double>(2, 2, 0.0);
  pred.z.at(0, 0) = 1.0;
  pred.z.at(0, 1) = 2.0;
  pred.z.at(1, 0) = 3.0;
  pred.z.at(1, 1) = 4.0;
  pred.valid = Grid<uint8_t>(2, 2, 1);

  Grid<double> gt(2, 2, 0.0);
  gt.at(0, 0) = 10.0;
  gt.at(0, 1) = 20.0;
  gt.at(1, 0) = 30.0;
  gt.at(1, 1) = 40.0;

  DepthEval ev = eval_depth(pred, gt);
  CHECK(ev.compared == 4);
  CHECK_FALSE(ev.degenerate);
  CHECK(ev.spearman == 1.0);

  Grid<double> reversed(2, 2, 0.0);
  reversed.at(0, 0) = 40.0;
  reversed.at(0, 1) = 30.0;
  reversed.at(1, 0) = 20.0;
  reversed.at(1, 1) = 10.0;
  CHECK(eval_depth(pred, reversed).spearman == -1.0);

  // One swapped pair: rank vectors {1,3,2,4} vs {1,2,3,4}.
  DepthResult swapped = pred;
  swapped.z.at(0, 1) = 3.0;
  swapped.z.at(1, 0) = 2.0;
  CHECK(eval_depth(swapped, gt).spearman == 0.8);

  DepthResult partial = pred;
  partial.valid = Grid<uint8_t>(2, 2, 0);
  partial.valid.at(0, 0) = 1;
  partial.valid.at(0, 1) = 1;
  DepthEval two = eval_depth(partial, reversed);
  CHECK(two.compared == 2);
  CHECK(two.spearman == -1.0);

  partial.valid.at(0, 1) = 0;
  DepthEval lone = eval_depth(partial, gt);
  CHECK(lone.degenerate);
  CHECK(lone.compared == 1);

  DepthResult flat = pred;
  flat.z = Grid<double>(2, 2, 5.0);
  DepthEval no_order = eval_depth(flat, gt);
  CHECK(no_order.degenerate);  // a constant ranking carries no order
  CHECK(no_order.compared == 4);
  CHECK(no_order.spearman == 0.0);

  Grid<double> flat_gt(2, 2, 9.0);
  CHECK(eval_depth(pred, flat_gt).degenerate);

  Grid<double> wrong(3, 2, 0.0);
  CHECK_THROWS_AS(eval_depth(pred, wrong), ShapeError);
}

TEST_CASE("patch majority takes the commonest value and breaks ties low") {
  Grid<uint8_t> px(4, 4, 0);
  // Block (0,0): unanimous 5.
  px.at(0, 0) = 5; px.at(0, 1) = 5; px.at(1, 0) = 5; px.at(1, 1) = 5;
  // Block (0,1): three 7s beat one 2.
  px.at(0, 2) = 7; px.at(0, 3) = 7; px.at(1, 2) = 2; px.at(1, 3) = 7;
  // Block (1,0): 3 and 9 tie, so 3 wins.
  px.at(2, 0) = 3; px.at(2, 1) = 9; px.at(3, 0) = 9; px.at(3, 1) = 3;
  // Block (1,1): four distinct values all tie, so the smallest wins.
  px.at(2, 2) = 4; px.at(2, 3) = 1; px.at(3, 2) = 6; px.at(3, 3) = 8;

  Grid<uint8_t> maj = patch_majority(px, 2);
  CHECK(maj.rows == 2);
  CHECK(maj.cols == 2);
  CHECK(maj.at(0, 0) == 5);
  CHECK(maj.at(0, 1) == 7);
  CHECK(maj.at(1, 0) == 3);
  CHECK(maj.at(1, 1) == 1);

  // Patch size 1 is the identity.
  Grid<uint8_t> same = patch_majority(px, 1);
  CHECK(same.data == px.data);

  // One patch covering everything: 5 and 7 appear 4 and 3 times.
  Grid<uint8_t> whole = patch_majority(px, 4);
  CHECK(whole.rows == 1);
  CHECK(whole.at(0, 0) == 5);

  // Signed types order ties arithmetically, not bitwise.
  Grid<int16_t> s16(2, 2, 0);
  s16.at(0, 0) = -5; s16.at(0, 1) = 8; s16.at(1, 0) = 8; s16.at(1, 1) = -5;
  CHECK(patch_majority(s16, 2).at(0, 0) == -5);

  Grid<int> ints(2, 2, 2);
  ints.at(1, 1) = 0;
  CHECK(patch_majority(ints, 2).at(0, 0) == 2);

  CHECK_THROWS_AS(patch_majority(px, 3), ShapeError);
  CHECK_THROWS_AS(patch_majority(px, 0), ShapeError);
}

TEST_CASE("sprite patch masks name owners by majority") {
  // Segment grids encode sprite i as value i+1, background as 0.
  Grid<uint8_t> seg(4, 4, 0);
  seg.at(0, 0) = 1; seg.at(0, 1) = 1; seg.at(1, 0) = 1; seg.at(1, 1) = 1;
  seg.at(2, 2) = 2; seg.at(2, 3) = 2; seg.at(3, 2) = 2;  // 3 of 4 pixels

  Grid<uint8_t> first = sprite_patch_mask(seg, 0, 2);
  CHECK(first.rows == 2);
  CHECK(first.at(0, 0) == 1);
  CHECK(first.at(0, 1) == 0);
  CHECK(first.at(1, 0) == 0);
  CHECK(first.at(1, 1) == 0);

  Grid<uint8_t> second = sprite_patch_mask(seg, 1, 2);
  CHECK(second.at(0, 0) == 0);
  CHECK(second.at(1, 1) == 1);

  // An even split against background loses the tie to background.
  Grid<uint8_t> tied(2, 2, 0);
  tied.at(0, 0) = 1;
  tied.at(0, 1) = 1;
  CHECK(sprite_patch_mask(tied, 0, 2).at(0, 0) == 0);
}

TEST_CASE("distribution helpers match hand-computed values") {
  std::vector<double> uniform{0.25, 0.25, 0.25, 0.25};
  CHECK(shannon_entropy(uniform) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  std::vector<double> point{1.0, 0.0, 0.0};
  CHECK(shannon_entropy(point) == 0.0);
  std::vector<double> half{0.5, 0.5, 0.0};
  CHECK(shannon_entropy(half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  std::vector<double> p{0.5, 0.5};
  std::vector<double> q{0.25, 0.75};
  // 0.5*ln(2) + 0.5*ln(2/3) = 0.5*ln(4/3)
  CHECK(kl_divergence(p, q) ==
        doctest::Approx(0.14384103622589045).epsilon(1e-12));
  CHECK(kl_divergence(p, p) == 0.0);

  // Zero-probability bins in q are floored rather than blowing up.
  std::vector<double> sure{1.0, 0.0};
  std::vector<double> opposite{0.0, 1.0};
  CHECK(kl_divergence(sure, opposite) ==
        doctest::Approx(-std::log(1e-12)).epsilon(1e-12));

  CHECK(cross_entropy(p, q) ==
        doctest::Approx(shannon_entropy(p) + kl_divergence(p, q))
            .epsilon(1e-12));
  CHECK(cross_entropy(p, q) ==
        doctest::Approx(0.8369882167858358).epsilon(1e-12));

  std::vector<double> longer{0.1, 0.2, 0.7};
  CHECK_THROWS_AS(kl_divergence(p, longer), ShapeError);
  CHECK_THROWS_AS(cross_entropy(p, longer), ShapeError);

  std::vector<double> masses{2.0, 2.0, 4.0};
  normalize(masses);
  CHECK(masses[0] == 0.25);
  CHECK(masses[1] == 0.25);
  CHECK(masses[2] == 0.5);
  std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_AS(normalize(zero), InvariantError);
}

TEST_CASE("hypothesis tests reproduce textbook p-values") {
  std::vector<double> fair{50.0, 50.0};
  CHECK(chi_square_p(fair, fair) == 1.0);

  std::vector<double> skew{60.0, 40.0};
  // stat = 100/50 + 100/50 = 4 with 1 dof
  CHECK(chi_square_p(skew, fair) ==
        doctest::Approx(0.04550026389635857).epsilon(1e-9));
  CHECK(chi_square_p(skew, fair, 2) ==
        doctest::Approx(std::exp(-2.0)).epsilon(1e-9));

  // Observed mass on a zero-expectation bin is an immediate rejection;
  // empty zero-expectation bins simply drop out.
  std::vector<double> obs_bad{1.0, 49.0, 50.0};
  std::vector<double> exp_gap{0.0, 50.0, 50.0};
  CHECK(chi_square_p(obs_bad, exp_gap) == 0.0);
  std::vector<double> obs_ok{0.0, 60.0, 40.0};
  CHECK(chi_square_p(obs_ok, exp_gap) ==
        doctest::Approx(0.04550026389635857).epsilon(1e-9));

  std::vector<double> single{10.0};
  CHECK(chi_square_p(single, single) == 1.0);  // zero dof
  CHECK_THROWS_AS(chi_square_p(fair, single), ShapeError);

  // d = {1,2,2,2,2}: mean 1.8, s = sqrt(0.2), t = 9 with 4 dof.
  std::vector<double> ta{2.0, 3.0, 4.0, 5.0, 6.0};
  std::vector<double> tb{1.0, 1.0, 2.0, 3.0, 4.0};
  CHECK(paired_t_p(ta, tb) ==
        doctest::Approx(0.0004219162588006391).epsilon(1e-9));
  CHECK(paired_t_p(tb, ta) ==
        doctest::Approx(1.0 - 0.0004219162588006391).epsilon(1e-9));

  // A constant difference has zero spread: certainty in either direction.
  std::vector<double> up{2.0, 3.0, 4.0};
  std::vector<double> base{1.0, 2.0, 3.0};
  CHECK(paired_t_p(up, base) == 0.0);
  CHECK(paired_t_p(base, base) == 1.0);
  std::vector<double> one{1.0};
  CHECK_THROWS_AS(paired_t_p(one, one), ShapeError);

  // p1 = 0.1 vs p2 = 0.3 pooled: z = 0.2/sqrt(0.0032).
  CHECK(two_proportion_p(10, 100, 30, 100) ==
        doctest::Approx(0.0002034760087224789).epsilon(1e-9));
  CHECK(two_proportion_p(30, 100, 10, 100) ==
        doctest::Approx(1.0 - 0.0002034760087224789).epsilon(1e-9));
  CHECK(two_proportion_p(20, 100, 20, 100) == 0.5);
  CHECK(two_proportion_p(0, 50, 0, 50) == 1.0);  // zero pooled variance
  CHECK_THROWS_AS(two_proportion_p(1, 0, 1, 10), ShapeError);

  CHECK(binomial_sigma(0.5, 100) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(binomial_sigma(0.2, 1000) ==
        doctest::Approx(std::sqrt(0.16 / 1000.0)).epsilon(1e-12));
}

TEST_CASE("rank and threshold summaries behave on known orderings") {
  std::vector<double> x{1.0, 2.0, 3.0};
  std::vector<double> squares{1.0, 4.0, 9.0};
  CHECK(spearman(x, squares) == 1.0);  // monotone, not linear
  std::vector<double> falling{9.0, 4.0, 1.0};
  CHECK(spearman(x, falling) == -1.0);

  // Tied middle pair gets the average rank 2.5.
  std::vector<double> tied{1.0, 2.0, 2.0, 3.0};
  std::vector<double> clean{1.0, 2.0, 3.0, 4.0};
  CHECK(spearman(tied, clean) ==
        doctest::Approx(0.9486832980505137).epsilon(1e-12));

  std::vector<double> flat{5.0, 5.0, 5.0};
  CHECK(spearman(flat, x) == 0.0);
  std::vector<double> one{1.0};
  CHECK_THROWS_AS(spearman(one, one), ShapeError);
  CHECK_THROWS_AS(spearman(x, clean), ShapeError);

  std::vector<double> scores{0.9, 0.8, 0.7, 0.6};
  std::vector<int> labels{1, 1, 0, 0};
  CHECK(auc(scores, labels) == 1.0);
  std::vector<int> flipped{0, 0, 1, 1};
  CHECK(auc(scores, flipped) == 0.0);
  std::vector<int> mixed{1, 0, 1, 0};
  CHECK(auc(scores, mixed) == 0.75);

  std::vector<double> equal{0.5, 0.5};
  std::vector<int> pair{1, 0};
  CHECK(auc(equal, pair) == 0.5);  // ties split the credit

  // Anything that is not label 1 counts as the negative class.
  std::vector<double> two_scores{0.9, 0.1};
  std::vector<int> odd_labels{1, 2};
  CHECK(auc(two_scores, odd_labels) == 1.0);

  std::vector<int> positives{1, 1, 1, 1};
  CHECK_THROWS_AS(auc(scores, positives), ShapeError);
  CHECK_THROWS_AS(auc(equal, labels), ShapeError);

  std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  CHECK(mean(v) == 2.5);
  CHECK(sample_std(v) ==
        doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-12));
  std::vector<double> empty;
  CHECK_THROWS_AS(mean(empty), ShapeError);
  CHECK_THROWS_AS(sample_std(one), ShapeError);
}
