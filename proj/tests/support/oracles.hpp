// SPDX-License-Identifier: Apache-2.0
// Slow, direct reference implementations used to check the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include <torch/torch.h>

#include "c2fdet/box.hpp"
#include "c2fdet/detection.hpp"
#include "c2fdet/mask.hpp"
#include "c2fdet/metrics.hpp"

namespace c2f::oracle {

/// Minimum over every injective assignment of the smaller side, by enumeration.
inline double brute_force_assignment(const std::vector<double>& cost, int rows, int cols) {
  const bool transpose = rows > cols;
  const int small = transpose ? cols : rows;
  const int large = transpose ? rows : cols;
  auto at = [&](int s, int l) { return transpose ? cost[l * cols + s] : cost[s * cols + l]; };
  std::vector<int> perm(large);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  // permutations of all large-side indices cover every injective map of the small side
  do {
    double total = 0.0;
    for (int s = 0; s < small; ++s) total += at(s, perm[s]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return small == 0 ? 0.0 : best;
}

inline double box_iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

struct PrAtThreshold {
  double precision = 0.0;
  double recall = 0.0;
};

/// Keeps detections with score >= threshold and matches them from scratch.
inline PrAtThreshold pr_at(const std::vector<metrics::ImageEval>& images, double threshold, double iou_thr,
                           int num_gts) {
  struct Item {
    int image, det;
    double score;
    Box box;
  };
  std::vector<Item> kept;
  for (int i = 0; i < static_cast<int>(images.size()); ++i) {
    for (int d = 0; d < static_cast<int>(images[i].detections.size()); ++d) {
      const auto& det = images[i].detections[d];
      if (det.score >= threshold) kept.push_back({i, d, det.score, det.box});
    }
  }
  std::sort(kept.begin(), kept.end(), [](const Item& a, const Item& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    return std::tie(a.box.x1, a.box.y1, a.box.x2, a.box.y2, a.det) <
           std::tie(b.box.x1, b.box.y1, b.box.x2, b.box.y2, b.det);
  });
  std::vector<std::set<int>> used(images.size());
  int tp = 0;
  for (const auto& it : kept) {
    const auto& gts = images[it.image].gts;
    int best = -1;
    double best_iou = -1;
    for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
      if (used[it.image].count(g)) continue;
      const double v = box_iou(it.box, gts[g]);
      if (v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best >= 0 && best_iou >= iou_thr) {
      used[it.image].insert(best);
      ++tp;
    }
  }
  PrAtThreshold out;
  out.recall = static_cast<double>(tp) / num_gts;
  out.precision = kept.empty() ? 0.0 : static_cast<double>(tp) / kept.size();
  return out;
}

struct ThresholdSweep {
  double ap11 = 0.0;
  double best_f1 = 0.0;
};

/// Enumerates every distinct score as a threshold and evaluates the 11-point
/// AP and the best F1 by definition.
inline ThresholdSweep threshold_sweep(const std::vector<metrics::ImageEval>& images, double iou_thr) {
  int num_gts = 0;
  std::set<double> scores;
  for (const auto& img : images) {
    num_gts += static_cast<int>(img.gts.size());
    for (const auto& d : img.detections) scores.insert(d.score);
  }
  std::vector<PrAtThreshold> pts;
  for (double s : scores) pts.push_back(pr_at(images, s, iou_thr, num_gts));
  ThresholdSweep out;
  for (int k = 0; k <= 10; ++k) {
    const double r = k / 10.0;
    double p = 0.0;
    for (const auto& pt : pts) {
      if (pt.recall >= r) p = std::max(p, pt.precision);
    }
    out.ap11 += p / 11.0;
  }
  for (const auto& pt : pts) {
    if (pt.precision + pt.recall > 0) {
      out.best_f1 = std::max(out.best_f1, 2 * pt.precision * pt.recall / (pt.precision + pt.recall));
    }
  }
  return out;
}

/// Union area of integer-cornered boxes by coordinate compression.
inline double union_area(const std::vector<Box>& boxes) {
  std::vector<double> xs, ys;
  for (const auto& b : boxes) {
    xs.insert(xs.end(), {b.x1, b.x2});
    ys.insert(ys.end(), {b.y1, b.y2});
  }
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
      const double cx = 0.5 * (xs[i] + xs[i + 1]);
      const double cy = 0.5 * (ys[j] + ys[j + 1]);
      for (const auto& b : boxes) {
        if (cx > b.x1 && cx < b.x2 && cy > b.y1 && cy < b.y2) {
          area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
          break;
        }
      }
    }
  }
  return area;
}

struct Component {
  double cx = 0, cy = 0, w = 0, h = 0;
};

/// Connected components by repeated label propagation until nothing changes.
inline std::vector<Component> label_components(const BinaryMask& m) {
  const int W = m.width, H = m.height;
  std::vector<int> label(static_cast<std::size_t>(W) * H, -1);
  for (int i = 0; i < W * H; ++i) {
    if (m.data[i]) label[i] = i;
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const int i = y * W + x;
        if (label[i] < 0) continue;
        const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
        for (const auto& n : nb) {
          if (n[0] < 0 || n[1] < 0 || n[0] >= W || n[1] >= H) continue;
          const int j = n[1] * W + n[0];
          if (label[j] >= 0 && label[j] < label[i]) {
            label[i] = label[j];
            changed = true;
          }
        }
      }
    }
  }
  std::vector<int> roots;
  for (int i = 0; i < W * H; ++i) {
    if (label[i] == i) roots.push_back(i);
  }
  std::vector<Component> out;
  for (int r : roots) {
    double sx = 0, sy = 0;
    int n = 0, x0 = W, x1 = -1, y0 = H, y1 = -1;
    for (int i = 0; i < W * H; ++i) {
      if (label[i] != r) continue;
      const int x = i % W, y = i / W;
      sx += x;
      sy += y;
      ++n;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
    out.push_back({sx / n / W, sy / n / H, static_cast<double>(x1 - x0 + 1) / W,
                   static_cast<double>(y1 - y0 + 1) / H});
  }
  return out;
}

struct GradCheck {
  int checked = 0;
  int passed = 0;
  double worst = 0.0;
  [[nodiscard]] double pass_rate() const { return checked ? static_cast<double>(passed) / checked : 0.0; }
};

/// Compares autograd against central differences at `count` random
/// coordinates of `input` (float64). A coordinate passes when
/// |analytic - numeric| <= rel_tol * max(|analytic|, |numeric|, 1e-6).
inline GradCheck finite_difference_check(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                         const torch::Tensor& input, int count, std::mt19937_64& rng,
                                         double rel_tol = 1e-3, double h = 1e-6) {
  auto x = input.detach().clone().to(torch::kFloat64).requires_grad_(true);
  auto y = f(x);
  auto grad = torch::autograd::grad({y}, {x}, {}, false, false, true)[0];
  if (!grad.defined()) grad = torch::zeros_like(x);
  auto flat_grad = grad.reshape({-1});
  const auto n = x.numel();
  std::uniform_int_distribution<int64_t> pick(0, n - 1);
  GradCheck out;
  torch::NoGradGuard no_grad;
  for (int k = 0; k < count; ++k) {
    const int64_t i = pick(rng);
    auto xp = x.detach().clone();
    auto xm = x.detach().clone();
    xp.view({-1})[i] += h;
    xm.view({-1})[i] -= h;
    const double numeric = (f(xp).item<double>() - f(xm).item<double>()) / (2 * h);
    const double analytic = flat_grad[i].item<double>();
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    const double err = std::abs(analytic - numeric) / scale;
    out.worst = std::max(out.worst, err);
    ++out.checked;
    if (err <= rel_tol) ++out.passed;
  }
  return out;
}

}  // namespace c2f::oracle
