// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <random>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "c2fdet/detection.hpp"
#include "c2fdet/mask.hpp"

namespace c2f::model {

/// One decoder query: normalized centre/size box plus its content vector.
struct AnchorQuery {
  double x = 0.5;
  double y = 0.5;
  double w = 0.1;
  double h = 0.1;
  std::vector<float> content_embedding;

  [[nodiscard]] double area() const { return w * h; }
};

/// Connected foreground regions of objectness masks, normalized by mask size.
struct CoarseRegionSet {
  std::vector<std::array<double, 2>> centroids;  ///< (x, y)
  std::vector<std::array<double, 2>> extents;    ///< (w, h)
  std::vector<int> source_frame_indices;

  [[nodiscard]] std::size_t size() const { return centroids.size(); }
  [[nodiscard]] bool empty() const { return centroids.empty(); }
};

struct QueryBudget {
  int num_queries = 100;
  double a_max = 0.2;  ///< maximum query box area as a fraction of the frame

  void validate() const;
};

/// 4-connected components of `mask`. Centroid is the mean cell index divided
/// by the mask size; extent is the bounding-box size in cells divided by the
/// mask size.
CoarseRegionSet extract_regions(const BinaryMask& mask, int source_frame = 0);

/// Concatenates the regions of several frames.
CoarseRegionSet pool_regions(std::span<const CoarseRegionSet> per_frame);

struct QueryInit {
  std::vector<AnchorQuery> anchors;
  std::vector<int> region_of_query;  ///< index into the pooled set, -1 for random
};

inline constexpr double kQueryJitter = 0.01;

/// Uniform-random anchors with area <= a_max.
std::vector<AnchorQuery> random_queries(const QueryBudget& budget, std::mt19937_64& rng);

/// Pools the regions of every frame in the batch and spreads the queries over
/// them: a random subset when there are more regions than queries, otherwise
/// round-robin with Gaussian centre jitter. Sizes start at the region extent
/// scaled down until area <= a_max. Falls back to random_queries when the
/// pool is empty. Always returns exactly budget.num_queries anchors.
QueryInit init_queries(std::span<const CoarseRegionSet> regions_per_frame, const QueryBudget& budget,
                       std::mt19937_64& rng, double jitter_sigma = kQueryJitter);

/// [Q, 4] tensor of (x, y, w, h).
torch::Tensor anchors_to_tensor(std::span<const AnchorQuery> anchors);

struct DecoderConfig {
  int num_layers = 3;
  int num_heads = 4;
  int model_width = 64;
  int ffn_dim = 256;
  int num_queries = 100;
};

/// Per-layer predictions; boxes are normalized (cx, cy, w, h).
struct DecoderOutput {
  std::vector<torch::Tensor> logits;  ///< each [B, Q]
  std::vector<torch::Tensor> boxes;   ///< each [B, Q, 4]

  [[nodiscard]] const torch::Tensor& final_logits() const { return logits.back(); }
  [[nodiscard]] const torch::Tensor& final_boxes() const { return boxes.back(); }
};

torch::Tensor inverse_sigmoid(const torch::Tensor& x, double eps = 1e-5);

/// Sine embedding of normalized coordinates: [..., k] -> [..., k * dims].
torch::Tensor sine_embedding(const torch::Tensor& coords, int dims);

/// One refinement layer: query self-attention, anchor-guided cross-attention
/// into the image features, feed-forward.
class DecoderLayerImpl : public torch::nn::Module {
 public:
  explicit DecoderLayerImpl(const DecoderConfig& config);

  /// content [B, Q, D], query_pos [B, Q, D], anchors [B, Q, 4],
  /// memory [B, N, D], memory_pos [B, N, D], key_xy [N, 2].
  torch::Tensor forward(const torch::Tensor& content, const torch::Tensor& query_pos,
                        const torch::Tensor& anchors, const torch::Tensor& memory,
                        const torch::Tensor& memory_pos, const torch::Tensor& key_xy);

 private:
  int width_, heads_;
  torch::nn::Linear sa_q_{nullptr}, sa_k_{nullptr}, sa_v_{nullptr}, sa_out_{nullptr};
  torch::nn::Linear ca_q_{nullptr}, ca_k_{nullptr}, ca_v_{nullptr}, ca_out_{nullptr};
  torch::nn::Linear ffn1_{nullptr}, ffn2_{nullptr};
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr}, norm3_{nullptr};
  torch::Tensor log_spread_;  ///< per-head width of the anchor-centred attention prior
};
TORCH_MODULE(DecoderLayer);

/// Anchor-box DETR decoder. Every layer predicts a class logit and a box delta
/// in inverse-sigmoid space relative to its input anchor; the refined box
/// (detached) is the next layer's anchor.
class DetrDecoderImpl : public torch::nn::Module {
 public:
  DetrDecoderImpl(DecoderConfig config, int feature_channels);

  /// features [B, C, H, W]; content [B, Q, D]; anchors [B, Q, 4] normalized.
  DecoderOutput forward(const torch::Tensor& features, const torch::Tensor& content,
                        const torch::Tensor& anchors);

  [[nodiscard]] const DecoderConfig& config() const { return config_; }

 private:
  DecoderConfig config_;
  torch::nn::Conv2d input_proj_{nullptr};
  torch::nn::Sequential ref_point_head_{nullptr};
  std::vector<DecoderLayer> layers_;
  torch::nn::Linear class_head_{nullptr};
  torch::nn::Sequential box_head_{nullptr};
};
TORCH_MODULE(DetrDecoder);

/// Final-layer predictions of one frame converted to pixel boxes.
std::vector<Detection> to_detections(const torch::Tensor& logits, const torch::Tensor& boxes,
                                     int frame_width, int frame_height);

enum class QuerySizeForm {
  Hinge,    ///< max(0, A_q - a_max)
  Literal,  ///< max(0, |A_q - a_max|), i.e. |A_q - a_max|
};

/// Sum over queries of the distance from the query centre to the nearest
/// region centroid. centers: [Q, 2]. Zero when there are no regions.
torch::Tensor dec_query_loss(const torch::Tensor& centers, const CoarseRegionSet& regions);
double dec_query_loss(std::span<const AnchorQuery> queries, const CoarseRegionSet& regions);

/// Sum over queries of the area hinge. sizes: [Q, 2] (w, h).
torch::Tensor dec_query_size_loss(const torch::Tensor& sizes, const QueryBudget& budget,
                                  QuerySizeForm form = QuerySizeForm::Hinge);
double dec_query_size_loss(std::span<const AnchorQuery> queries, const QueryBudget& budget,
                           QuerySizeForm form = QuerySizeForm::Hinge);

}  // namespace c2f::model
