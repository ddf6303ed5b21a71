// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "c2fdet/backbone.hpp"
#include "c2fdet/box.hpp"
#include "oracles.hpp"

using namespace c2f;
using namespace c2f::model;

TEST(Backbone, LevelShapesFollowStrides) {
  torch::manual_seed(0);
  Backbone net(BackboneConfig::preset("toy"));
  torch::NoGradGuard g;
  const auto p = net->forward(torch::randn({1, 3, 192, 256}));
  ASSERT_EQ(p.levels.size(), 4u);
  const int64_t expect[4][2] = {{48, 64}, {24, 32}, {12, 16}, {6, 8}};
  for (int l = 0; l < 4; ++l) {
    EXPECT_EQ(p.levels[l].size(2), expect[l][0]);
    EXPECT_EQ(p.levels[l].size(3), expect[l][1]);
    EXPECT_EQ(p.stages[l].size(2), expect[l][0]);
  }
  EXPECT_EQ(p.fused.sizes(), p.levels[0].sizes());
}

TEST(Backbone, LastThreeStagesAreShallowToDeep) {
  torch::manual_seed(0);
  Backbone net(BackboneConfig::preset("toy"));
  torch::NoGradGuard g;
  const auto p = net->forward(torch::randn({2, 3, 96, 128}));
  const auto three = last_three_stage_features(p);
  ASSERT_EQ(three.size(), 3u);
  EXPECT_EQ(three[0].size(2), 4 * three[2].size(2));
  EXPECT_EQ(three[0].size(3), 4 * three[2].size(3));
  EXPECT_EQ(three[1].size(3), 2 * three[2].size(3));
  // stride 8 relative to the input
  EXPECT_EQ(three[0].size(3), 128 / 8);
}

TEST(Backbone, ShapeContractHoldsForRandomConfigs) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 6; ++t) {
    BackboneConfig c;
    c.embed_dim = 8 * static_cast<int>(1 + rng() % 3);
    c.window_size = static_cast<int>(2 + rng() % 3);
    c.patch_size = static_cast<int>(2 + 2 * (rng() % 2));
    c.depths = {1, 1, 1, 1};
    c.num_heads = {1, 1, 2, 2};
    c.fpn_dim = 16;
    const int s = c.max_stride();
    const int h = s * static_cast<int>(1 + rng() % 3), w = s * static_cast<int>(1 + rng() % 3);
    torch::manual_seed(t);
    Backbone net(c);
    torch::NoGradGuard g;
    const auto p = net->forward(torch::randn({1, 3, h, w}));
    for (int l = 1; l < 4; ++l) {
      EXPECT_EQ(p.levels[l - 1].size(2), 2 * p.levels[l].size(2));
      EXPECT_EQ(p.levels[l - 1].size(3), 2 * p.levels[l].size(3));
    }
    EXPECT_EQ(p.levels[0].size(2), h / c.patch_size);
  }
}

TEST(Backbone, BadFrameSizeNamesTheAxis) {
  torch::manual_seed(0);
  Backbone net(BackboneConfig::preset("toy"));
  try {
    net->forward(torch::zeros({1, 3, 96, 100}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("width"), std::string::npos);
  }
  EXPECT_THROW(net->forward(torch::zeros({1, 3, 90, 128})), ShapeError);
}

TEST(Backbone, ZeroInputIsFiniteAndDeterministic) {
  torch::manual_seed(0);
  Backbone net(BackboneConfig::preset("toy"));
  net->eval();
  torch::NoGradGuard g;
  const auto a = net->forward(torch::zeros({1, 3, 64, 64}));
  EXPECT_TRUE(torch::isfinite(a.fused).all().item<bool>());
  const auto b = net->forward(torch::zeros({1, 3, 64, 64}));
  EXPECT_TRUE(torch::equal(a.fused, b.fused));
  for (std::size_t l = 0; l < a.levels.size(); ++l) EXPECT_TRUE(torch::equal(a.levels[l], b.levels[l]));
}

TEST(Backbone, UnknownPresetIsConfigError) {
  EXPECT_THROW(BackboneConfig::preset("swin-xl"), ConfigError);
  EXPECT_NO_THROW(BackboneConfig::preset("swin-t").validate());
}

TEST(Backbone, InputGradientMatchesFiniteDifferences) {
  torch::manual_seed(1);
  BackboneConfig c = BackboneConfig::preset("toy");
  c.embed_dim = 8;
  c.num_heads = {1, 1, 2, 2};
  c.fpn_dim = 8;
  Backbone net(c);
  net->to(torch::kFloat64);
  const auto readout = torch::randn({1, 8, 8, 8}, torch::kFloat64);
  auto f = [&](const torch::Tensor& x) { return (net->forward(x).fused * readout).sum(); };
  std::mt19937_64 rng(2);
  const auto r = oracle::finite_difference_check(f, torch::randn({1, 3, 32, 32}, torch::kFloat64), 60, rng);
  EXPECT_GE(r.pass_rate(), 0.99) << "worst relative error " << r.worst;
}
