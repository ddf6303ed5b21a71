// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

namespace c2f::model {

/// Hierarchical windowed-attention encoder settings. The named presets mirror
/// the Swin-T/S/B family scaled down to CPU size.
struct BackboneConfig {
  int embed_dim = 32;
  std::vector<int> depths{1, 1, 2, 1};
  std::vector<int> num_heads{1, 2, 4, 8};
  int window_size = 4;
  int num_stages = 4;
  int patch_size = 4;
  double mlp_ratio = 4.0;
  int fpn_dim = 64;

  static BackboneConfig preset(const std::string& name);

  void validate() const;
  /// Total stride of the deepest stage: patch_size * 2^(num_stages - 1).
  [[nodiscard]] int max_stride() const;
  /// Throws ShapeError naming the axis that is not divisible by max_stride().
  void check_frame(int height, int width) const;
};

/// Backbone and FPN outputs; every tensor is [B, C, H, W].
struct FeaturePyramid {
  std::vector<torch::Tensor> stages;  ///< raw stage outputs, stride doubling per level
  std::vector<torch::Tensor> levels;  ///< FPN outputs, fpn_dim channels each
  torch::Tensor fused;                ///< levels resized to levels[0] and combined
};

/// Initializes a weight tensor from N(0, std) truncated to +-2 std.
void trunc_normal_(torch::Tensor& w, double std = 0.02);

class WindowAttentionImpl : public torch::nn::Module {
 public:
  WindowAttentionImpl(int dim, int heads, int window_size);
  /// x: [num_windows * B, n, C] with n = ws * ws for the effective window size
  /// `ws` (<= configured). mask: [num_windows, n, n] or undefined.
  torch::Tensor forward(const torch::Tensor& x, int ws, const torch::Tensor& mask);

 private:
  int dim_, heads_, window_size_;
  torch::nn::Linear qkv_{nullptr}, proj_{nullptr};
  torch::Tensor bias_table_;
};
TORCH_MODULE(WindowAttention);

class TransformerBlockImpl : public torch::nn::Module {
 public:
  TransformerBlockImpl(int dim, int heads, int window_size, bool shifted, double mlp_ratio);
  /// x: [B, H, W, C]
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int window_size_;
  bool shifted_;
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  WindowAttention attn_{nullptr};
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(TransformerBlock);

class PatchMergingImpl : public torch::nn::Module {
 public:
  explicit PatchMergingImpl(int dim);
  torch::Tensor forward(const torch::Tensor& x);  ///< [B,H,W,C] -> [B,H/2,W/2,2C]

 private:
  torch::nn::LayerNorm norm_{nullptr};
  torch::nn::Linear reduction_{nullptr};
};
TORCH_MODULE(PatchMerging);

class BackboneImpl : public torch::nn::Module {
 public:
  explicit BackboneImpl(BackboneConfig config);

  /// frames: [B, 3, H, W], roughly zero-centred.
  FeaturePyramid forward(const torch::Tensor& frames);

  [[nodiscard]] const BackboneConfig& config() const { return config_; }
  [[nodiscard]] std::vector<int> stage_channels() const;

 private:
  BackboneConfig config_;
  torch::nn::Conv2d patch_embed_{nullptr};
  torch::nn::LayerNorm embed_norm_{nullptr};
  std::vector<PatchMerging> merges_;
  std::vector<std::vector<TransformerBlock>> blocks_;
  std::vector<torch::nn::LayerNorm> out_norms_;
  std::vector<torch::nn::Conv2d> lateral_;
  std::vector<torch::nn::Conv2d> fpn_out_;
  torch::nn::Conv2d fuse_{nullptr};
};
TORCH_MODULE(Backbone);

/// The three deepest raw stage outputs, shallow to deep.
std::vector<torch::Tensor> last_three_stage_features(const FeaturePyramid& pyramid);

}  // namespace c2f::model
