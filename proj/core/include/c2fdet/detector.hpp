// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "c2fdet/backbone.hpp"
#include "c2fdet/finedet.hpp"
#include "c2fdet/oen.hpp"
#include "c2fdet/synthdata.hpp"

namespace c2f::model {

/// The four cumulative configurations of the component study.
enum class Variant {
  Baseline,   ///< learned anchors, no objectness branch
  Oen,        ///< + objectness branch trained with the OE loss
  QueryInit,  ///< + anchors initialized from the objectness mask
  Full,       ///< + decoder query and query size losses
};

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct ModelConfig {
  BackboneConfig backbone;
  OENConfig oen;
  DecoderConfig decoder;
  double a_max = 0.2;
  double mask_threshold = kDefaultMaskThreshold;
  double query_jitter = kQueryJitter;
  bool use_oen = true;
  bool query_init = true;
  bool query_losses = true;

  void validate() const;
  void apply_variant(Variant v);
  [[nodiscard]] QueryBudget budget() const { return {decoder.num_queries, a_max}; }
};

struct DetectorOutput {
  FeaturePyramid pyramid;
  std::optional<OEFeatureMap> oe;
  torch::Tensor score_map;  ///< [B, h, w]; undefined without the objectness branch
  std::vector<ObjectnessMask> masks;
  CoarseRegionSet regions;  ///< regions of every frame in the batch, pooled
  torch::Tensor anchors;    ///< [B, Q, 4] initial anchors fed to the decoder
  DecoderOutput decoder;
};

class DetectorImpl : public torch::nn::Module {
 public:
  /// Parameters are drawn from the torch generator; use make_detector for a
  /// seeded model.
  DetectorImpl(ModelConfig config, std::uint64_t anchor_seed);

  /// frames [B, 3, H, W]. `rng` drives query initialization. When
  /// `override_masks` is given (one per frame) it replaces the predicted
  /// masks for query initialization.
  DetectorOutput forward(const torch::Tensor& frames, std::mt19937_64& rng,
                         const std::vector<BinaryMask>* override_masks = nullptr);

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  Backbone& backbone() { return backbone_; }
  ObjectEnhancementNet& oen() { return oen_; }
  DetrDecoder& decoder() { return decoder_; }

 private:
  ModelConfig config_;
  Backbone backbone_{nullptr};
  ObjectEnhancementNet oen_{nullptr};
  DetrDecoder decoder_{nullptr};
  torch::Tensor content_;         ///< [Q, D]
  torch::Tensor anchor_logits_;  ///< [Q, 4] learned anchors in inverse-sigmoid space
};
TORCH_MODULE(Detector);

/// Seeds the torch generator and builds the model, so equal seeds give equal
/// weights.
Detector make_detector(const ModelConfig& config, std::uint64_t seed);

/// Frames as a [B, 3, H, W] float tensor, scaled to [-0.5, 0.5].
torch::Tensor frames_to_tensor(std::span<const synth::Image> frames);
torch::Tensor frames_to_tensor(std::span<const synth::Image* const> frames);

/// Pixel boxes as normalized (cx, cy, w, h), [G, 4].
torch::Tensor boxes_to_tensor(std::span<const Box> boxes, FrameShape shape);

}  // namespace c2f::model
