// SPDX-License-Identifier: Apache-2.0
#include "c2fdet/oen.hpp"

#include <algorithm>
#include <cmath>

#include "c2fdet/box.hpp"

namespace F = torch::nn::functional;

namespace c2f::model {

namespace {

constexpr double kScorePrior = 0.01;

void append_conv_block(torch::nn::Sequential& seq, int in, int out) {
  auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1));
  torch::nn::init::zeros_(conv->bias);
  const int groups = out % 8 == 0 ? 8 : 1;
  seq->push_back(conv);
  seq->push_back(torch::nn::GroupNorm(torch::nn::GroupNormOptions(groups, out)));
  seq->push_back(torch::nn::GELU());
}

torch::nn::Sequential merge_block(int w) {
  torch::nn::Sequential seq;
  append_conv_block(seq, 2 * w, w);
  append_conv_block(seq, w, w);
  return seq;
}

torch::nn::Conv2d conv1x1(int in, int out) {
  auto c = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1));
  torch::nn::init::zeros_(c->bias);
  return c;
}

torch::Tensor upsample2x(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

void check_doubling(const torch::Tensor& fine, const torch::Tensor& coarse, const char* what) {
  if (fine.size(2) != 2 * coarse.size(2) || fine.size(3) != 2 * coarse.size(3)) {
    throw ShapeError(std::string("OEN stride mismatch between ") + what + ": " +
                     std::to_string(fine.size(2)) + "x" + std::to_string(fine.size(3)) + " vs " +
                     std::to_string(coarse.size(2)) + "x" + std::to_string(coarse.size(3)));
  }
}

}  // namespace

ObjectEnhancementNetImpl::ObjectEnhancementNetImpl(std::vector<int> in_channels, OENConfig config)
    : config_(config) {
  if (in_channels.size() != 3) throw ConfigError("OEN takes exactly three input stages");
  const int w = config_.width;
  proj_shallow_ = register_module("proj_shallow", conv1x1(in_channels[0], w));
  proj_mid_ = register_module("proj_mid", conv1x1(in_channels[1], w));
  proj_deep_ = register_module("proj_deep", conv1x1(in_channels[2], w));
  merge_mid_ = register_module("merge_mid", merge_block(w));
  merge_shallow_ = register_module("merge_shallow", merge_block(w));
  head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(w, config_.out_channels, 3).padding(1)));
  // start with almost every cell below threshold
  torch::NoGradGuard no_grad;
  head_->bias.fill_(-std::log((1 - kScorePrior) / kScorePrior));
}

OEFeatureMap ObjectEnhancementNetImpl::forward(const std::vector<torch::Tensor>& stage_features) {
  if (stage_features.size() != 3) throw ShapeError("OEN expects three stage feature maps");
  const auto& shallow = stage_features[0];
  const auto& mid = stage_features[1];
  const auto& deep = stage_features[2];
  check_doubling(mid, deep, "mid and deep");
  check_doubling(shallow, mid, "shallow and mid");

  auto up_deep = upsample2x(proj_deep_(deep));
  auto m = merge_mid_->forward(torch::cat({up_deep, proj_mid_(mid)}, 1)) + up_deep;
  auto up_m = upsample2x(m);
  auto s = merge_shallow_->forward(torch::cat({up_m, proj_shallow_(shallow)}, 1)) + up_m;
  return {head_(s)};
}

torch::Tensor objectness_scores(const OEFeatureMap& oe) { return oe.data.mean(1).sigmoid(); }

ObjectnessMask threshold_scores(const torch::Tensor& score_map, double threshold) {
  ObjectnessMask out;
  out.score_map = score_map;
  out.threshold = threshold;
  auto bits = (score_map.detach() > threshold).to(torch::kUInt8).contiguous().cpu();
  const int h = static_cast<int>(bits.size(0));
  const int w = static_cast<int>(bits.size(1));
  out.mask = BinaryMask(w, h);
  std::copy_n(bits.data_ptr<std::uint8_t>(), out.mask.data.size(), out.mask.data.begin());
  return out;
}

std::vector<ObjectnessMask> objectness_mask(const OEFeatureMap& oe, double threshold) {
  auto scores = objectness_scores(oe);
  std::vector<ObjectnessMask> out;
  for (int64_t b = 0; b < scores.size(0); ++b) out.push_back(threshold_scores(scores[b], threshold));
  return out;
}

OELossWeights::OELossWeights(double a, double b) : alpha(a), beta(b) {
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw ConfigError("object enhancement loss weights must be > 0 (alpha=" + std::to_string(alpha) +
                      ", beta=" + std::to_string(beta) + ")");
  }
}

torch::Tensor mask_tensor(const BinaryMask& mask, torch::ScalarType dtype) {
  auto t = torch::from_blob(const_cast<std::uint8_t*>(mask.data.data()), {mask.height, mask.width},
                            torch::kUInt8);
  return t.to(dtype, /*non_blocking=*/false, /*copy=*/true);
}

torch::Tensor dice_loss(const torch::Tensor& score_map, const torch::Tensor& gt, DiceForm form) {
  if (score_map.sizes() != gt.sizes()) throw ShapeError("dice_loss: P and G shapes differ");
  auto g = gt.to(score_map.dtype());
  auto inter = (score_map * g).sum();
  auto sum_p = score_map.sum();
  auto sum_g = g.sum();
  if (form == DiceForm::Literal) return 1.0 - 2.0 * inter / (sum_p + sum_g - inter + kLossEps);
  return 1.0 - 2.0 * inter / (sum_p + sum_g + kLossEps);
}

torch::Tensor dilated_instance_regions(const GroundTruthMask& gt) {
  const int w = gt.mask.width, h = gt.mask.height;
  const auto n = static_cast<int64_t>(gt.instance_boxes.size());
  auto regions = torch::zeros({n, h, w}, torch::kBool);
  for (int64_t i = 0; i < n; ++i) {
    const auto& b = gt.instance_boxes[i];
    const Box grown = Box::from_center(b.cx(), b.cy(), 2.0 * b.width(), 2.0 * b.height());
    const Box one[] = {grown};
    regions[i].copy_(mask_tensor(rasterize_boxes(one, w, h), torch::kBool));
  }
  return regions;
}

torch::Tensor instance_bce_loss(const torch::Tensor& score_map, const GroundTruthMask& gt,
                                BceForm form) {
  if (score_map.size(0) != gt.mask.height || score_map.size(1) != gt.mask.width) {
    throw ShapeError("instance_bce_loss: P and G shapes differ");
  }
  auto p = score_map.clamp(kLossEps, 1.0 - kLossEps);
  auto g = mask_tensor(gt.mask, score_map.scalar_type());
  auto bce = -(g * p.log() + (1 - g) * (1 - p).log());
  if (form == BceForm::PerPixel) return bce.mean();

  auto regions = dilated_instance_regions(gt);
  auto total = torch::zeros({}, score_map.options());
  for (int64_t i = 0; i < regions.size(0); ++i) {
    auto r = regions[i];
    if (r.any().item<bool>()) total = total + bce.masked_select(r).mean();
  }
  auto background = regions.size(0) > 0 ? regions.any(0).logical_not()
                                        : torch::ones_like(g, torch::kBool);
  if (background.any().item<bool>()) total = total + bce.masked_select(background).mean();
  return total;
}

torch::Tensor oe_loss(const torch::Tensor& score_map, const GroundTruthMask& gt,
                      const OELossWeights& weights, DiceForm dice_form, BceForm bce_form) {
  auto g = mask_tensor(gt.mask, score_map.scalar_type());
  return weights.alpha * dice_loss(score_map, g, dice_form) +
         weights.beta * instance_bce_loss(score_map, gt, bce_form);
}

}  // namespace c2f::model
