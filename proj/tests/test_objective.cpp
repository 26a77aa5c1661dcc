#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "echolab/objective.hpp"
#include "support/grad_check.hpp"

using namespace echolab;
using namespace echolab::objective;
using nn::Var;

namespace {

Var<double> row(std::vector<double> d) {
  const int n = static_cast<int>(d.size());
  return nn::constant<double>({1, n}, std::move(d));
}

// independent pixel-counting oracle for binary masks
struct Counts {
  long inter = 0, a = 0, b = 0;
};
Counts count_masks(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  Counts c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    c.inter += a[i] && b[i] ? 1 : 0;
    c.a += a[i];
    c.b += b[i];
  }
  return c;
}

}  // namespace

TEST_CASE("mse worked examples") {
  CHECK(mse_loss(row({1, 0, 1}), row({1, 0, 1}))->value[0] == 0.0);
  CHECK(mse_loss(row({2, 1, 3}), row({1, 0, 2}))->value[0] == doctest::Approx(1.0));
  CHECK(mse_loss(row({0.5, 0.0}), row({1.0, 0.0}))->value[0] == doctest::Approx(0.125));
}

TEST_CASE("dice worked examples and conventions") {
  CHECK(dice_loss(row({1, 0, 1, 0}), row({1, 0, 1, 0}))->value[0] == doctest::Approx(0.0));
  CHECK(dice_loss(row({1, 1, 0, 0}), row({0, 0, 1, 1}))->value[0] == doctest::Approx(1.0));
  // two-pixel masks overlapping in one pixel: 1 - 2*1/4 = 0.5
  CHECK(dice_loss(row({1, 1, 0, 0}), row({0, 1, 1, 0}))->value[0] == doctest::Approx(0.5));
  // both empty: vacuous agreement scores 0
  CHECK(dice_loss(row({0, 0, 0}), row({0, 0, 0}))->value[0] == 0.0);
}

TEST_CASE("pit height loss picks the better orientation") {
  // symmetric target: both orientations tie, loss equals the plain MSE
  const auto sym = pit_height_loss(row({0.2, 0.9, 0.2}), row({0, 1, 0}));
  CHECK(sym.chosen[0] == HeightOrientation::Original);
  CHECK(sym.loss->value[0] ==
        doctest::Approx(mse_loss(row({0.2, 0.9, 0.2}), row({0, 1, 0}))->value[0]));

  const auto flipped = pit_height_loss(row({1, 0, 0}), row({0, 0, 1}));
  CHECK(flipped.loss->value[0] == doctest::Approx(0.0));
  CHECK(flipped.chosen[0] == HeightOrientation::Flipped);
  CHECK(mse_loss(row({1, 0, 0}), row({0, 0, 1}))->value[0] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("pit is exactly invariant to flipping the ground truth") {
  for (int trial = 0; trial < 1000; ++trial) {
    Rng rng(9000 + static_cast<std::uint64_t>(trial));
    const int h = 2 + static_cast<int>(rng.uniform_int(0, 14));
    std::vector<double> pred(static_cast<std::size_t>(h)), gt(static_cast<std::size_t>(h));
    for (double& v : pred) v = rng.uniform();
    for (double& v : gt) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    std::vector<double> gt_rev(gt.rbegin(), gt.rend());
    const double a = pit_height_loss(row(pred), row(gt)).loss->value[0];
    const double b = pit_height_loss(row(pred), row(gt_rev)).loss->value[0];
    REQUIRE(a == b);
  }
}

TEST_CASE("total loss composes its three terms with alpha=0.3, beta=1") {
  auto perfect_lw = row({1, 0, 1, 0});
  auto perfect_h = row({0, 1, 0});
  const auto zero = total_loss(perfect_lw, perfect_h, row({1, 0, 1, 0}), row({0, 1, 0}));
  CHECK(zero.total->value[0] == doctest::Approx(0.0));

  // only the height off by a constant 1: total = beta * 1
  const auto h_off = total_loss(perfect_lw, row({1, 2, 1}), row({1, 0, 1, 0}), row({0, 1, 0}));
  CHECK(h_off.total->value[0] == doctest::Approx(1.0));

  Rng rng(5150);
  std::vector<double> p_lw(16), g_lw(16), p_h(8), g_h(8);
  for (double& v : p_lw) v = rng.uniform();
  for (double& v : g_lw) v = rng.uniform() < 0.5 ? 0 : 1;
  for (double& v : p_h) v = rng.uniform();
  for (double& v : g_h) v = rng.uniform() < 0.5 ? 0 : 1;
  const auto t = total_loss(row(p_lw), row(p_h), row(g_lw), row(g_h));
  CHECK(t.total->value[0] == doctest::Approx(t.mse_lw + 0.3 * t.dice_lw + 1.0 * t.mse_h));
  const double frozen = 0.1 + 0.3 * 0.5 + 1.0 * 0.2;  // worked weighted-sum example
  CHECK(frozen == doctest::Approx(0.45));
}

TEST_CASE("height orientation resolution counts around the vector center") {
  // ones at 14..33 of 40: 6 below center 20, 13 above -> floor stays low
  std::vector<std::uint8_t> v(40, 0);
  for (int k = 14; k <= 33; ++k) v[static_cast<std::size_t>(k)] = 1;
  const auto r = resolve_height_orientation(v);
  CHECK_FALSE(r.flipped);
  CHECK(r.floor_index == 14);

  // symmetric span: tie keeps the orientation
  std::vector<std::uint8_t> sym(40, 0);
  for (int k = 15; k <= 25; ++k) sym[static_cast<std::size_t>(k)] = 1;
  CHECK_FALSE(resolve_height_orientation(sym).flipped);

  // heavier mass below the center contradicts a floor-hugging device, so the
  // vector is flipped to put the smaller count on the floor side
  std::vector<std::uint8_t> low(40, 0);
  for (int k = 5; k <= 15; ++k) low[static_cast<std::size_t>(k)] = 1;
  const auto rl = resolve_height_orientation(low);
  CHECK(rl.flipped);
  CHECK(rl.floor_index == 24);

  // everything above the center already has the smaller count below
  std::vector<std::uint8_t> high(40, 0);
  for (int k = 25; k <= 35; ++k) high[static_cast<std::size_t>(k)] = 1;
  CHECK_FALSE(resolve_height_orientation(high).flipped);

  CHECK_THROWS_AS(resolve_height_orientation(std::vector<std::uint8_t>(10, 0)), NoInteriorPixels);
}

TEST_CASE("iou worked examples") {
  CHECK(iou({1, 1, 0}, {1, 1, 0}) == 1.0);
  CHECK(iou({1, 0, 0}, {0, 1, 1}) == 0.0);
  // 4 pixels each, 2 shared: 2 / 6
  CHECK(iou({1, 1, 1, 1, 0, 0}, {1, 1, 0, 0, 1, 1}) == doctest::Approx(1.0 / 3.0));
  CHECK(iou({0, 0}, {0, 0}) == 1.0);
}

TEST_CASE("dice and iou match the pixel-counting oracle on 1000 random 8x8 pairs") {
  for (int trial = 0; trial < 1000; ++trial) {
    Rng rng(31000 + static_cast<std::uint64_t>(trial));
    std::vector<std::uint8_t> a(64), b(64);
    const double pa = rng.uniform(0.1, 0.9), pb = rng.uniform(0.1, 0.9);
    for (auto& v : a) v = rng.uniform() < pa ? 1 : 0;
    for (auto& v : b) v = rng.uniform() < pb ? 1 : 0;
    const Counts c = count_masks(a, b);

    const double oracle_iou =
        (c.a + c.b - c.inter) == 0 ? 1.0
                                   : static_cast<double>(c.inter) / static_cast<double>(c.a + c.b - c.inter);
    REQUIRE(iou(a, b) == oracle_iou);

    std::vector<double> da(a.begin(), a.end()), db(b.begin(), b.end());
    const double oracle_dice =
        (c.a + c.b) == 0 ? 0.0 : 1.0 - 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.a + c.b);
    REQUIRE(dice_loss(row(da), row(db))->value[0] == oracle_dice);

    // binary identities
    if (oracle_dice == 0.0) REQUIRE(oracle_iou == 1.0);
    if (oracle_dice == 1.0) REQUIRE(oracle_iou == 0.0);
  }
}

TEST_CASE("loss gradients pass finite-difference checks") {
  const auto mse_b = [](const std::vector<Var<double>>& in) { return mse_loss(in[0], in[1]); };
  const auto dice_b = [](const std::vector<Var<double>>& in) { return dice_loss(in[0], in[1]); };
  const auto total_b = [](const std::vector<Var<double>>& in) {
    return total_loss(in[0], in[1], in[2], in[3]).total;
  };
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    worst = std::max(worst, gradcheck::check(mse_b, {{2, 6}, {2, 6}}, seed, -1, 1).max_rel_error);
    worst = std::max(worst, gradcheck::check(dice_b, {{2, 6}, {2, 6}}, seed, 0.05, 1.0).max_rel_error);
    worst = std::max(
        worst,
        gradcheck::check(total_b, {{2, 8}, {2, 4}, {2, 8}, {2, 4}}, seed, 0.05, 0.95).max_rel_error);
  }
  CHECK(worst < 1e-4);
}
