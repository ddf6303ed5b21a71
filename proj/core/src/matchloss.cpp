// SPDX-License-Identifier: Apache-2.0
#include "c2fdet/matchloss.hpp"

#include <algorithm>
#include <set>

#include "c2fdet/box.hpp"
#include "c2fdet/hungarian.hpp"

namespace c2f::loss {

void LossWeights::validate() const {
  for (double w : {w_cls, w_l1, w_giou, w_oe, w_query, w_query_size}) {
    if (!(w >= 0.0)) throw ConfigError("loss weights must be >= 0");
  }
}

torch::Tensor cxcywh_to_xyxy(const torch::Tensor& boxes) {
  auto c = boxes.unbind(-1);
  return torch::stack({c[0] - 0.5 * c[2], c[1] - 0.5 * c[3], c[0] + 0.5 * c[2], c[1] + 0.5 * c[3]},
                      -1);
}

torch::Tensor giou(const torch::Tensor& a, const torch::Tensor& b) {
  auto area_a = (a.select(-1, 2) - a.select(-1, 0)).clamp_min(0) *
                (a.select(-1, 3) - a.select(-1, 1)).clamp_min(0);
  auto area_b = (b.select(-1, 2) - b.select(-1, 0)).clamp_min(0) *
                (b.select(-1, 3) - b.select(-1, 1)).clamp_min(0);
  auto lt = torch::max(a.narrow(-1, 0, 2), b.narrow(-1, 0, 2));
  auto rb = torch::min(a.narrow(-1, 2, 2), b.narrow(-1, 2, 2));
  auto wh = (rb - lt).clamp_min(0);
  auto inter = wh.select(-1, 0) * wh.select(-1, 1);
  auto uni = (area_a + area_b - inter).clamp_min(kBoxEps);
  auto hull_lt = torch::min(a.narrow(-1, 0, 2), b.narrow(-1, 0, 2));
  auto hull_rb = torch::max(a.narrow(-1, 2, 2), b.narrow(-1, 2, 2));
  auto hull_wh = (hull_rb - hull_lt).clamp_min(0);
  auto hull = (hull_wh.select(-1, 0) * hull_wh.select(-1, 1)).clamp_min(kBoxEps);
  return inter / uni - (hull - uni) / hull;
}

torch::Tensor match_cost(const torch::Tensor& logits, const torch::Tensor& boxes,
                         const torch::Tensor& gt_boxes, const LossWeights& weights,
                         const FocalParams& focal) {
  torch::NoGradGuard no_grad;
  const auto q = logits.size(0);
  const auto g = gt_boxes.size(0);
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  if (g == 0) return torch::zeros({q, 0}, opts);
  auto lg = logits.detach().to(torch::kFloat64);
  auto pb = boxes.detach().to(torch::kFloat64);
  auto gb = gt_boxes.detach().to(torch::kFloat64);

  auto p = lg.sigmoid();
  constexpr double eps = 1e-8;
  auto neg = (1 - focal.alpha) * p.pow(focal.gamma) * (-(1 - p + eps).log());
  auto pos = focal.alpha * (1 - p).pow(focal.gamma) * (-(p + eps).log());
  auto cls = (pos - neg).unsqueeze(1).expand({q, g});

  auto l1 = torch::cdist(pb, gb, 1.0);
  auto pa = cxcywh_to_xyxy(pb).unsqueeze(1).expand({q, g, 4});
  auto ga = cxcywh_to_xyxy(gb).unsqueeze(0).expand({q, g, 4});
  auto gi = giou(pa, ga);
  return weights.w_cls * cls + weights.w_l1 * l1 + weights.w_giou * (1 - gi);
}

MatchResult hungarian_match(const torch::Tensor& logits, const torch::Tensor& boxes,
                            const torch::Tensor& gt_boxes, const LossWeights& weights,
                            const FocalParams& focal) {
  const int q = static_cast<int>(logits.size(0));
  const int g = static_cast<int>(gt_boxes.size(0));
  MatchResult out;
  if (g == 0 || q == 0) {
    for (int i = 0; i < q; ++i) out.unmatched_predictions.push_back(i);
    return out;
  }
  auto cost = match_cost(logits, boxes, gt_boxes, weights, focal).contiguous();
  std::vector<double> flat(cost.data_ptr<double>(), cost.data_ptr<double>() + cost.numel());
  const auto row_to_col = solve_assignment(flat, q, g);
  for (int i = 0; i < q; ++i) {
    if (row_to_col[i] >= 0) out.pairs.emplace_back(i, row_to_col[i]);
    else out.unmatched_predictions.push_back(i);
  }
  return out;
}

double assignment_cost(const torch::Tensor& cost, const MatchResult& match) {
  auto c = cost.to(torch::kFloat64).contiguous();
  const auto cols = c.size(1);
  const double* data = c.data_ptr<double>();
  double total = 0.0;
  for (auto [p, g] : match.pairs) total += data[p * cols + g];
  return total;
}

torch::Tensor focal_loss(const torch::Tensor& logits, const MatchResult& match,
                         const FocalParams& focal, double normalizer) {
  auto target = torch::zeros_like(logits);
  for (auto [p, g] : match.pairs) target[p] = 1.0;
  auto prob = logits.sigmoid();
  // numerically stable BCE with logits
  auto ce = logits.clamp_min(0) - logits * target + torch::log1p(torch::exp(-logits.abs()));
  auto p_t = prob * target + (1 - prob) * (1 - target);
  auto loss = ce * (1 - p_t).pow(focal.gamma);
  if (focal.alpha >= 0) {
    auto alpha_t = focal.alpha * target + (1 - focal.alpha) * (1 - target);
    loss = alpha_t * loss;
  }
  const double norm =
      normalizer > 0 ? normalizer : std::max<double>(1.0, static_cast<double>(match.pairs.size()));
  return loss.sum() / norm;
}

RegressionTerms reg_terms(const torch::Tensor& boxes, const torch::Tensor& gt_boxes,
                          const MatchResult& match, double normalizer) {
  if (match.pairs.empty()) {
    auto zero = boxes.sum() * 0.0;
    return {zero, zero};
  }
  std::vector<int64_t> pi, gi;
  for (auto [p, g] : match.pairs) {
    pi.push_back(p);
    gi.push_back(g);
  }
  auto pidx = torch::tensor(pi, torch::kLong);
  auto gidx = torch::tensor(gi, torch::kLong);
  auto pb = boxes.index_select(0, pidx);
  auto gb = gt_boxes.to(boxes.dtype()).index_select(0, gidx);
  const double norm = normalizer > 0 ? normalizer : static_cast<double>(match.pairs.size());
  auto l1 = (pb - gb).abs().sum() / norm;
  auto g = (1 - giou(cxcywh_to_xyxy(pb), cxcywh_to_xyxy(gb))).sum() / norm;
  return {l1, g};
}

torch::Tensor reg_loss(const torch::Tensor& boxes, const torch::Tensor& gt_boxes,
                       const MatchResult& match, const LossWeights& weights) {
  auto t = reg_terms(boxes, gt_boxes, match);
  return weights.w_l1 * t.l1 + weights.w_giou * t.giou;
}

LossBreakdown total_loss(const LossTerms& terms, const LossWeights& weights) {
  const std::pair<const char*, std::pair<const torch::Tensor*, double>> parts[] = {
      {"cls", {&terms.cls, weights.w_cls}},
      {"l1", {&terms.l1, weights.w_l1}},
      {"giou", {&terms.giou, weights.w_giou}},
      {"oe", {&terms.oe, weights.w_oe}},
      {"query", {&terms.query, weights.w_query}},
      {"query_size", {&terms.query_size, weights.w_query_size}},
  };
  LossBreakdown out;
  for (const auto& [name, tw] : parts) {
    const auto& [t, w] = tw;
    if (!t->defined()) continue;
    auto contribution = w * *t;
    out.total = out.total.defined() ? out.total + contribution : contribution;
    out.raw[name] = t->item<double>();
    out.weighted[name] = contribution.item<double>();
  }
  if (!out.total.defined()) out.total = torch::zeros({}, torch::kFloat32);
  return out;
}

}  // namespace c2f::loss
