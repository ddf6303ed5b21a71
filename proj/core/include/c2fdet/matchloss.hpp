// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace c2f::loss {

struct FocalParams {
  double gamma = 2.0;
  double alpha = 0.25;
};

/// Weights of the total training objective. The first three also weight the
/// matching cost.
struct LossWeights {
  double w_cls = 2.0;
  double w_l1 = 5.0;
  double w_giou = 2.0;
  double w_oe = 1.0;
  double w_query = 1.0;
  double w_query_size = 1.0;

  void validate() const;
};

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  ///< (prediction, gt), sorted by prediction
  std::vector<int> unmatched_predictions;
};

/// Matching cost [Q, G]: w_cls * focal class cost + w_l1 * L1 + w_giou * (1 - GIoU).
/// Boxes are normalized (cx, cy, w, h). Computed without autograd.
torch::Tensor match_cost(const torch::Tensor& logits, const torch::Tensor& boxes,
                         const torch::Tensor& gt_boxes, const LossWeights& weights,
                         const FocalParams& focal = {});

MatchResult hungarian_match(const torch::Tensor& logits, const torch::Tensor& boxes,
                            const torch::Tensor& gt_boxes, const LossWeights& weights,
                            const FocalParams& focal = {});

/// Sum of cost[p, g] over matched pairs.
double assignment_cost(const torch::Tensor& cost, const MatchResult& match);

/// Sigmoid focal loss over all predictions (matched = positive) divided by
/// `normalizer`, which defaults to max(1, number of gts).
torch::Tensor focal_loss(const torch::Tensor& logits, const MatchResult& match,
                         const FocalParams& focal = {}, double normalizer = 0.0);

torch::Tensor cxcywh_to_xyxy(const torch::Tensor& boxes);

/// Element-wise generalized IoU of two [N, 4] corner-form box tensors.
torch::Tensor giou(const torch::Tensor& a, const torch::Tensor& b);

struct RegressionTerms {
  torch::Tensor l1;    ///< summed |delta| over (cx, cy, w, h), averaged over pairs
  torch::Tensor giou;  ///< mean (1 - GIoU) over pairs
};

/// Unweighted regression terms over matched pairs; zero when nothing matched.
RegressionTerms reg_terms(const torch::Tensor& boxes, const torch::Tensor& gt_boxes,
                          const MatchResult& match, double normalizer = 0.0);

/// w_l1 * L1 + w_giou * (1 - GIoU), averaged over matched pairs.
torch::Tensor reg_loss(const torch::Tensor& boxes, const torch::Tensor& gt_boxes,
                       const MatchResult& match, const LossWeights& weights);

/// Unweighted loss terms; undefined tensors count as zero.
struct LossTerms {
  torch::Tensor cls;
  torch::Tensor l1;
  torch::Tensor giou;
  torch::Tensor oe;
  torch::Tensor query;
  torch::Tensor query_size;
};

struct LossBreakdown {
  torch::Tensor total;
  std::map<std::string, double> weighted;  ///< per-term contribution to total
  std::map<std::string, double> raw;       ///< per-term unweighted value
};

LossBreakdown total_loss(const LossTerms& terms, const LossWeights& weights);

}  // namespace c2f::loss
