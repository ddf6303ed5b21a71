// SPDX-License-Identifier: Apache-2.0
#include "c2fdet/detector.hpp"

#include "c2fdet/box.hpp"

namespace c2f::model {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::Oen: return "oen";
    case Variant::QueryInit: return "query_init";
    case Variant::Full: return "full";
  }
  return "full";
}

Variant variant_from_string(const std::string& name) {
  if (name == "baseline") return Variant::Baseline;
  if (name == "oen") return Variant::Oen;
  if (name == "query_init") return Variant::QueryInit;
  if (name == "full") return Variant::Full;
  throw ConfigError("unknown variant '" + name + "' (expected baseline|oen|query_init|full)");
}

void ModelConfig::validate() const {
  backbone.validate();
  budget().validate();
  if (decoder.num_layers < 1) throw ConfigError("decoder num_layers must be >= 1");
  if (decoder.num_heads < 1 || decoder.model_width % decoder.num_heads != 0) {
    throw ConfigError("decoder model_width must be a multiple of num_heads");
  }
  if (decoder.model_width % 2 != 0) throw ConfigError("decoder model_width must be even");
  if (decoder.ffn_dim < 1) throw ConfigError("decoder ffn_dim must be >= 1");
  if (oen.width < 1 || oen.out_channels < 1) throw ConfigError("oen width and out_channels must be >= 1");
  if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) throw ConfigError("mask_threshold must lie in (0, 1)");
  if (query_jitter < 0.0) throw ConfigError("query_jitter must be >= 0");
  if (backbone.num_stages < 3) throw ConfigError("backbone needs at least three stages");
  if ((query_init || query_losses) && !use_oen) {
    throw ConfigError("query_init and query_losses need use_oen");
  }
}

void ModelConfig::apply_variant(Variant v) {
  use_oen = v != Variant::Baseline;
  query_init = v == Variant::QueryInit || v == Variant::Full;
  query_losses = v == Variant::Full;
}

DetectorImpl::DetectorImpl(ModelConfig config, std::uint64_t anchor_seed) : config_(std::move(config)) {
  config_.validate();
  backbone_ = register_module("backbone", Backbone(config_.backbone));
  const auto channels = backbone_->stage_channels();
  if (config_.use_oen) {
    const auto n = channels.size();
    oen_ = register_module("oen", ObjectEnhancementNet(std::vector<int>{channels[n - 3], channels[n - 2],
                                                                        channels[n - 1]},
                                                       config_.oen));
  }
  decoder_ = register_module("decoder", DetrDecoder(config_.decoder, config_.backbone.fpn_dim));
  const int Q = config_.decoder.num_queries;
  auto content = torch::empty({Q, config_.decoder.model_width});
  torch::nn::init::normal_(content, 0.0, 1.0);
  content_ = register_parameter("content", content);

  std::mt19937_64 rng(anchor_seed);
  auto anchors = anchors_to_tensor(random_queries(config_.budget(), rng));
  anchor_logits_ = register_parameter("anchor_logits", inverse_sigmoid(anchors));
}

DetectorOutput DetectorImpl::forward(const torch::Tensor& frames, std::mt19937_64& rng,
                                     const std::vector<BinaryMask>* override_masks) {
  DetectorOutput out;
  const auto B = frames.size(0);
  out.pyramid = backbone_->forward(frames);
  if (config_.use_oen) {
    out.oe = oen_->forward(last_three_stage_features(out.pyramid));
    out.score_map = objectness_scores(*out.oe);
    out.masks = objectness_mask(*out.oe, config_.mask_threshold);
  }

  if (config_.query_init || override_masks) {
    std::vector<CoarseRegionSet> per_frame;
    for (int64_t b = 0; b < B; ++b) {
      const BinaryMask& m = override_masks ? override_masks->at(b) : out.masks.at(b).mask;
      auto regions = extract_regions(m, static_cast<int>(b));
      // index means to cell centres in frame coordinates
      for (auto& c : regions.centroids) {
        c[0] += 0.5 / m.width;
        c[1] += 0.5 / m.height;
      }
      per_frame.push_back(std::move(regions));
    }
    out.regions = pool_regions(per_frame);
    auto init = init_queries(per_frame, config_.budget(), rng, config_.query_jitter);
    out.anchors = anchors_to_tensor(init.anchors).to(frames.dtype()).unsqueeze(0).expand({B, -1, -1});
  } else {
    out.anchors = anchor_logits_.sigmoid().unsqueeze(0).expand({B, -1, -1});
  }
  auto content = content_.unsqueeze(0).expand({B, -1, -1});
  out.decoder = decoder_->forward(out.pyramid.fused, content, out.anchors);
  return out;
}

Detector make_detector(const ModelConfig& config, std::uint64_t seed) {
  torch::manual_seed(seed);
  return Detector(config, seed ^ 0x5bd1e995ULL);
}

namespace {

template <typename Get>
torch::Tensor stack_frames(std::size_t n, Get get) {
  if (n == 0) throw ShapeError("no frames to convert");
  const auto& first = get(0);
  auto out = torch::empty({static_cast<int64_t>(n), 3, first.height, first.width}, torch::kFloat32);
  for (std::size_t i = 0; i < n; ++i) {
    const synth::Image& img = get(i);
    if (img.width != first.width || img.height != first.height) {
      throw ShapeError("frames in one batch differ in size");
    }
    auto hwc = torch::from_blob(const_cast<std::uint8_t*>(img.rgb.data()), {img.height, img.width, 3},
                                torch::kUInt8);
    out[static_cast<int64_t>(i)].copy_(hwc.permute({2, 0, 1}).to(torch::kFloat32) / 255.0 - 0.5);
  }
  return out;
}

}  // namespace

torch::Tensor frames_to_tensor(std::span<const synth::Image> frames) {
  return stack_frames(frames.size(), [&](std::size_t i) -> const synth::Image& { return frames[i]; });
}

torch::Tensor frames_to_tensor(std::span<const synth::Image* const> frames) {
  return stack_frames(frames.size(), [&](std::size_t i) -> const synth::Image& { return *frames[i]; });
}

torch::Tensor boxes_to_tensor(std::span<const Box> boxes, FrameShape shape) {
  auto t = torch::empty({static_cast<int64_t>(boxes.size()), 4}, torch::kFloat32);
  auto acc = t.accessor<float, 2>();
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    acc[i][0] = static_cast<float>(b.cx() / shape.width);
    acc[i][1] = static_cast<float>(b.cy() / shape.height);
    acc[i][2] = static_cast<float>(b.width() / shape.width);
    acc[i][3] = static_cast<float>(b.height() / shape.height);
  }
  return t;
}

}  // namespace c2f::model
