// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include <torch/torch.h>

#include "c2fdet/mask.hpp"

namespace c2f::model {

struct OENConfig {
  int width = 64;         ///< channels inside the merge blocks
  int out_channels = 16;  ///< channels of the object-enhanced map
};

/// Object-enhanced feature map [B, C, H, W] at the shallowest input resolution.
struct OEFeatureMap {
  torch::Tensor data;
};

/// Score map in [0, 1] plus its thresholded binary mask for one frame.
struct ObjectnessMask {
  torch::Tensor score_map;  ///< [H, W]
  BinaryMask mask;          ///< mask(x, y) == 1 iff score_map[y][x] > threshold
  double threshold = 0.6;
};

inline constexpr double kDefaultMaskThreshold = 0.6;
inline constexpr double kLossEps = 1e-6;

/// Fuses the three deepest backbone stages into one object-enhanced map:
/// deep is upsampled and merged with mid, the result upsampled and merged
/// with shallow. Each merge concatenates, runs two conv-norm-GELU blocks and
/// adds the upsampled path back as a skip connection.
class ObjectEnhancementNetImpl : public torch::nn::Module {
 public:
  ObjectEnhancementNetImpl(std::vector<int> in_channels, OENConfig config = {});

  /// stage_features: shallow, mid, deep; each [B, C_i, H_i, W_i] with
  /// H_mid == 2 * H_deep and H_shallow == 2 * H_mid (same for widths).
  OEFeatureMap forward(const std::vector<torch::Tensor>& stage_features);

  [[nodiscard]] const OENConfig& config() const { return config_; }

 private:
  OENConfig config_;
  torch::nn::Conv2d proj_shallow_{nullptr}, proj_mid_{nullptr}, proj_deep_{nullptr};
  torch::nn::Sequential merge_mid_{nullptr}, merge_shallow_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(ObjectEnhancementNet);

/// Channel-mean of the OE map squashed by the logistic function: [B, H, W].
torch::Tensor objectness_scores(const OEFeatureMap& oe);

/// Thresholds one frame's score map ([H, W], values in [0, 1]).
ObjectnessMask threshold_scores(const torch::Tensor& score_map, double threshold);

/// One ObjectnessMask per frame of the batch.
std::vector<ObjectnessMask> objectness_mask(const OEFeatureMap& oe,
                                            double threshold = kDefaultMaskThreshold);

enum class DiceForm {
  Standard,  ///< 1 - 2|P.G| / (|P| + |G| + eps); 0 at perfect overlap
  Literal,   ///< 1 - 2|P.G| / |P u G| with the soft union |P| + |G| - |P.G|
};

enum class BceForm {
  InstanceAware,  ///< per-instance mean inside each dilated box + background mean
  PerPixel,       ///< plain mean BCE over all pixels
};

struct OELossWeights {
  double alpha = 2.0;  ///< Dice weight
  double beta = 1.0;   ///< BCE weight

  OELossWeights() = default;
  /// Throws ConfigError unless both weights are > 0.
  OELossWeights(double alpha, double beta);
};

/// Ground-truth mask as a float tensor [H, W].
torch::Tensor mask_tensor(const BinaryMask& mask, torch::ScalarType dtype = torch::kFloat32);

torch::Tensor dice_loss(const torch::Tensor& score_map, const torch::Tensor& gt,
                        DiceForm form = DiceForm::Standard);

/// Cells of each instance box dilated x2 about its centre, as [n, H, W] bool.
torch::Tensor dilated_instance_regions(const GroundTruthMask& gt);

torch::Tensor instance_bce_loss(const torch::Tensor& score_map, const GroundTruthMask& gt,
                                BceForm form = BceForm::InstanceAware);

torch::Tensor oe_loss(const torch::Tensor& score_map, const GroundTruthMask& gt,
                      const OELossWeights& weights, DiceForm dice_form = DiceForm::Standard,
                      BceForm bce_form = BceForm::InstanceAware);

}  // namespace c2f::model
