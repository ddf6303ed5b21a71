// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "c2fdet/oen.hpp"
#include "c2fdet/synthdata.hpp"
#include "oracles.hpp"

using namespace c2f;
using namespace c2f::model;

namespace {

GroundTruthMask make_gt(int w, int h, std::vector<Box> boxes) {
  GroundTruthMask gt;
  gt.mask = rasterize_boxes(boxes, w, h);
  gt.instance_boxes = std::move(boxes);
  return gt;
}

}  // namespace

TEST(Oen, OutputAtShallowResolution) {
  torch::manual_seed(0);
  ObjectEnhancementNet net(std::vector<int>{64, 128, 256});
  torch::NoGradGuard g;
  const auto oe = net->forward({torch::randn({2, 64, 48, 64}), torch::randn({2, 128, 24, 32}),
                                torch::randn({2, 256, 12, 16})});
  EXPECT_EQ(oe.data.sizes(), (std::vector<int64_t>{2, 16, 48, 64}));
}

TEST(Oen, StrideMismatchIsRejected) {
  torch::manual_seed(0);
  ObjectEnhancementNet net(std::vector<int>{4, 4, 4});
  EXPECT_THROW(net->forward({torch::randn({1, 4, 16, 16}), torch::randn({1, 4, 8, 8}), torch::randn({1, 4, 8, 8})}),
               ShapeError);
  EXPECT_THROW(net->forward({torch::randn({1, 4, 16, 16}), torch::randn({1, 4, 8, 8})}), ShapeError);
}

TEST(Oen, ZeroInputsGiveNearConstantScores) {
  torch::manual_seed(0);
  ObjectEnhancementNet net(std::vector<int>{8, 16, 32});
  torch::NoGradGuard g;
  const auto oe = net->forward({torch::zeros({1, 8, 16, 16}), torch::zeros({1, 16, 8, 8}), torch::zeros({1, 32, 4, 4})});
  const auto s = objectness_scores(oe);
  // zero-padding at the borders is the only source of variation
  const auto inner = s.index({0, torch::indexing::Slice(3, 13), torch::indexing::Slice(3, 13)});
  EXPECT_LT((inner.max() - inner.min()).item<double>(), 1e-6);
}

TEST(Oen, EveryInputReceivesGradient) {
  torch::manual_seed(0);
  ObjectEnhancementNet net(std::vector<int>{8, 16, 32});
  std::vector<torch::Tensor> in = {torch::randn({1, 8, 16, 16}, torch::requires_grad()),
                                   torch::randn({1, 16, 8, 8}, torch::requires_grad()),
                                   torch::randn({1, 32, 4, 4}, torch::requires_grad())};
  net->forward(in).data.mean().backward();
  for (const auto& t : in) EXPECT_GT(t.grad().abs().sum().item<double>(), 0.0);
}

TEST(ObjectnessMask, LogisticOfZeroIsBelowDefaultThreshold) {
  OEFeatureMap oe{torch::zeros({1, 4, 6, 6})};
  const auto m = objectness_mask(oe, 0.6);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].mask.sum(), 0);
  EXPECT_NEAR(m[0].score_map.min().item<double>(), 0.5, 1e-12);
}

TEST(ObjectnessMask, SaturatedPixelIsOn) {
  auto data = torch::zeros({1, 4, 6, 6});
  data.index_put_({0, torch::indexing::Slice(), 2, 3}, 10.0);
  const auto m = objectness_mask({data}, 0.6);
  EXPECT_EQ(m[0].mask.sum(), 1);
  EXPECT_EQ(m[0].mask.at(3, 2), 1);
}

TEST(ObjectnessMask, ZeroThresholdIsAllOnes) {
  const auto m = objectness_mask({torch::randn({2, 3, 5, 7})}, 0.0);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[1].mask.sum(), 35);
}

TEST(ObjectnessMask, MaskEqualsScoreAboveThreshold) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const double thr = u(rng);
    const auto scores = torch::rand({9, 11}, torch::kFloat64);
    const auto m = threshold_scores(scores, thr);
    auto acc = scores.accessor<double, 2>();
    for (int y = 0; y < 9; ++y) {
      for (int x = 0; x < 11; ++x) ASSERT_EQ(m.mask.at(x, y), acc[y][x] > thr ? 1 : 0);
    }
  }
}

TEST(DiceLoss, UniformHalfAgainstOnePixel) {
  auto p = torch::full({4, 4}, 0.5, torch::kFloat64);
  auto g = torch::zeros({4, 4}, torch::kFloat64);
  g[1][2] = 1.0;
  EXPECT_NEAR(dice_loss(p, g).item<double>(), 1.0 - 2 * 0.5 / (8 + 1 + kLossEps), 1e-12);
  EXPECT_NEAR(dice_loss(p, g).item<double>(), 0.8889, 1e-4);
}

TEST(DiceLoss, PerfectAndDisjoint) {
  auto g = torch::zeros({5, 5}, torch::kFloat64);
  g.index_put_({torch::indexing::Slice(1, 3), torch::indexing::Slice(1, 3)}, 1.0);
  EXPECT_NEAR(dice_loss(g, g).item<double>(), 0.0, 1e-6);
  EXPECT_NEAR(dice_loss(1 - g, g).item<double>(), 1.0, 1e-9);
  // the printed union denominator reaches -1 at perfect overlap
  EXPECT_NEAR(dice_loss(g, g, DiceForm::Literal).item<double>(), -1.0, 1e-6);
}

TEST(DiceLoss, SymmetricForBinaryMasks) {
  for (int t = 0; t < 20; ++t) {
    auto a = (torch::rand({6, 6}, torch::kFloat64) > 0.5).to(torch::kFloat64);
    auto b = (torch::rand({6, 6}, torch::kFloat64) > 0.5).to(torch::kFloat64);
    EXPECT_NEAR(dice_loss(a, b).item<double>(), dice_loss(b, a).item<double>(), 1e-12);
  }
}

TEST(DiceLoss, ShapeMismatchIsRejected) {
  EXPECT_THROW(dice_loss(torch::zeros({3, 3}), torch::zeros({3, 4})), ShapeError);
}

TEST(InstanceBce, PerfectPredictionAndEmptyFrame) {
  const auto gt = make_gt(8, 8, {{2, 2, 4, 4}});
  const auto p = mask_tensor(gt.mask, torch::kFloat64);
  EXPECT_LT(instance_bce_loss(p, gt).item<double>(), 1e-4);
  const auto empty = make_gt(8, 8, {});
  EXPECT_LT(instance_bce_loss(torch::zeros({8, 8}, torch::kFloat64), empty).item<double>(), 1e-4);
}

TEST(InstanceBce, TwoIdenticalInstancesCountTwice) {
  // identical local predictions around two equal, well separated boxes
  auto two = make_gt(24, 8, {{2, 3, 4, 5}, {14, 3, 16, 5}});
  auto p = torch::full({8, 24}, 0.1, torch::kFloat64);
  p.index_put_({torch::indexing::Slice(3, 5), torch::indexing::Slice(2, 4)}, 0.7);
  p.index_put_({torch::indexing::Slice(3, 5), torch::indexing::Slice(14, 16)}, 0.7);
  p[2][1] = 0.3;
  p[2][13] = 0.3;

  // brute force: BCE averaged inside each dilated box and over the rest
  auto bce = [](double pv, double g) { return -(g * std::log(pv) + (1 - g) * std::log(1 - pv)); };
  auto acc = p.accessor<double, 2>();
  auto gm = two.mask;
  auto inside = [](int x, int y, const Box& b) {
    const Box d = Box::from_center(b.cx(), b.cy(), 2 * b.width(), 2 * b.height());
    return x + 1 > d.x1 && x < d.x2 && y + 1 > d.y1 && y < d.y2;
  };
  double inst[2] = {0, 0}, bg = 0;
  int n_inst[2] = {0, 0}, n_bg = 0;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 24; ++x) {
      const double v = bce(acc[y][x], gm.at(x, y));
      bool any = false;
      for (int k = 0; k < 2; ++k) {
        if (inside(x, y, two.instance_boxes[k])) {
          inst[k] += v;
          ++n_inst[k];
          any = true;
        }
      }
      if (!any) {
        bg += v;
        ++n_bg;
      }
    }
  }
  const double expect = inst[0] / n_inst[0] + inst[1] / n_inst[1] + bg / n_bg;
  EXPECT_NEAR(instance_bce_loss(p, two).item<double>(), expect, 1e-9);
  EXPECT_NEAR(inst[0] / n_inst[0], inst[1] / n_inst[1], 1e-12);
  EXPECT_NEAR(instance_bce_loss(p, two).item<double>(), 2 * inst[0] / n_inst[0] + bg / n_bg, 1e-9);
}

TEST(InstanceBce, PerPixelFormIsPlainMean) {
  const auto gt = make_gt(6, 6, {{1, 1, 3, 3}});
  const auto p = torch::rand({6, 6}, torch::kFloat64) * 0.8 + 0.1;
  const auto g = mask_tensor(gt.mask, torch::kFloat64);
  const auto expect = torch::binary_cross_entropy(p, g).item<double>();
  EXPECT_NEAR(instance_bce_loss(p, gt, BceForm::PerPixel).item<double>(), expect, 1e-12);
}

TEST(OeLoss, WeightsMustBePositive) {
  EXPECT_THROW(OELossWeights(0.0, 1.0), ConfigError);
  EXPECT_THROW(OELossWeights(2.0, -1.0), ConfigError);
  EXPECT_NO_THROW(OELossWeights(2.0, 1.0));
}

TEST(OeLoss, IsWeightedSumOfTerms) {
  const auto gt = make_gt(8, 8, {{2, 2, 5, 4}});
  const auto p = torch::rand({8, 8}, torch::kFloat64) * 0.9 + 0.05;
  const auto g = mask_tensor(gt.mask, torch::kFloat64);
  const double expect = 2.0 * dice_loss(p, g).item<double>() + 1.0 * instance_bce_loss(p, gt).item<double>();
  EXPECT_NEAR(oe_loss(p, gt, OELossWeights(2.0, 1.0)).item<double>(), expect, 1e-12);
  EXPECT_LT(oe_loss(g, gt, {}).item<double>(), 1e-4);
}

TEST(OeLoss, RaisingForegroundScoreNeverHurts) {
  std::mt19937_64 rng(5);
  const auto gt = make_gt(10, 10, {{2, 2, 6, 5}, {7, 7, 9, 9}});
  const auto g = mask_tensor(gt.mask, torch::kFloat64);
  for (int t = 0; t < 100; ++t) {
    auto p = torch::rand({10, 10}, torch::kFloat64) * 0.9 + 0.05;
    const int x = 2 + static_cast<int>(rng() % 4), y = 2 + static_cast<int>(rng() % 3);
    auto q = p.clone();
    q[y][x] = std::min(0.99, q[y][x].item<double>() + 0.05);
    EXPECT_LE(dice_loss(q, g).item<double>(), dice_loss(p, g).item<double>() + 1e-12);
    EXPECT_LE(instance_bce_loss(q, gt).item<double>(), instance_bce_loss(p, gt).item<double>() + 1e-12);
  }
}

TEST(OeLoss, GradientsMatchFiniteDifferences) {
  const auto gt = make_gt(12, 10, {{2, 2, 5, 4}, {8, 6, 10, 9}});
  const auto g = mask_tensor(gt.mask, torch::kFloat64);
  std::mt19937_64 rng(7);
  const auto logits = torch::randn({10, 12}, torch::kFloat64);
  auto dice = [&](const torch::Tensor& x) { return dice_loss(x.sigmoid(), g); };
  auto bce = [&](const torch::Tensor& x) { return instance_bce_loss(x.sigmoid(), gt); };
  auto oe = [&](const torch::Tensor& x) { return oe_loss(x.sigmoid(), gt, {}); };
  for (const auto& f : {std::function<torch::Tensor(const torch::Tensor&)>(dice), {bce}, {oe}}) {
    const auto r = oracle::finite_difference_check(f, logits, 60, rng);
    EXPECT_GE(r.pass_rate(), 0.99) << "worst " << r.worst;
  }
}
