// SPDX-License-Identifier: Apache-2.0
#include "c2fdet/finedet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "c2fdet/box.hpp"

namespace F = torch::nn::functional;

namespace c2f::model {

void QueryBudget::validate() const {
  if (num_queries < 1) throw ConfigError("num_queries must be >= 1");
  if (!(a_max > 0.0 && a_max <= 1.0)) throw ConfigError("a_max must lie in (0, 1]");
}

CoarseRegionSet extract_regions(const BinaryMask& mask, int source_frame) {
  CoarseRegionSet out;
  const int W = mask.width, H = mask.height;
  std::vector<int> label(static_cast<std::size_t>(W) * H, -1);
  std::vector<int> stack;
  for (int y0 = 0; y0 < H; ++y0) {
    for (int x0 = 0; x0 < W; ++x0) {
      const auto start = static_cast<std::size_t>(y0) * W + x0;
      if (!mask.data[start] || label[start] >= 0) continue;
      const int id = static_cast<int>(out.size());
      double sx = 0, sy = 0;
      long count = 0;
      int minx = x0, maxx = x0, miny = y0, maxy = y0;
      label[start] = id;
      stack.assign(1, static_cast<int>(start));
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int x = p % W, y = p / W;
        sx += x;
        sy += y;
        ++count;
        minx = std::min(minx, x);
        maxx = std::max(maxx, x);
        miny = std::min(miny, y);
        maxy = std::max(maxy, y);
        const int nx[] = {x - 1, x + 1, x, x};
        const int ny[] = {y, y, y - 1, y + 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || ny[k] < 0 || nx[k] >= W || ny[k] >= H) continue;
          const auto q = static_cast<std::size_t>(ny[k]) * W + nx[k];
          if (mask.data[q] && label[q] < 0) {
            label[q] = id;
            stack.push_back(static_cast<int>(q));
          }
        }
      }
      out.centroids.push_back({sx / count / W, sy / count / H});
      out.extents.push_back({static_cast<double>(maxx - minx + 1) / W,
                             static_cast<double>(maxy - miny + 1) / H});
      out.source_frame_indices.push_back(source_frame);
    }
  }
  return out;
}

CoarseRegionSet pool_regions(std::span<const CoarseRegionSet> per_frame) {
  CoarseRegionSet out;
  for (const auto& r : per_frame) {
    out.centroids.insert(out.centroids.end(), r.centroids.begin(), r.centroids.end());
    out.extents.insert(out.extents.end(), r.extents.begin(), r.extents.end());
    out.source_frame_indices.insert(out.source_frame_indices.end(), r.source_frame_indices.begin(),
                                    r.source_frame_indices.end());
  }
  return out;
}

std::vector<AnchorQuery> random_queries(const QueryBudget& budget, std::mt19937_64& rng) {
  budget.validate();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double side = std::sqrt(budget.a_max);
  std::vector<AnchorQuery> out(budget.num_queries);
  for (auto& q : out) {
    q.x = u01(rng);
    q.y = u01(rng);
    q.w = 0.01 + (side - 0.01) * u01(rng);
    q.h = 0.01 + (side - 0.01) * u01(rng);
    q.w = std::min(q.w, side);
    q.h = std::min(q.h, side);
  }
  return out;
}

QueryInit init_queries(std::span<const CoarseRegionSet> regions_per_frame, const QueryBudget& budget,
                       std::mt19937_64& rng, double jitter_sigma) {
  budget.validate();
  QueryInit out;
  const auto pool = pool_regions(regions_per_frame);
  const int Q = budget.num_queries;
  if (pool.empty()) {
    out.anchors = random_queries(budget, rng);
    out.region_of_query.assign(Q, -1);
    return out;
  }
  const int P = static_cast<int>(pool.size());
  std::vector<int> order(P);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::normal_distribution<double> jitter(0.0, jitter_sigma);
  out.anchors.resize(Q);
  out.region_of_query.resize(Q);
  for (int i = 0; i < Q; ++i) {
    // P >= Q: the first Q entries of the permutation are distinct regions
    const int r = order[i % P];
    out.region_of_query[i] = r;
    auto& a = out.anchors[i];
    const double jx = jitter_sigma > 0 ? jitter(rng) : 0.0;
    const double jy = jitter_sigma > 0 ? jitter(rng) : 0.0;
    a.x = std::clamp(pool.centroids[r][0] + jx, 0.0, 1.0);
    a.y = std::clamp(pool.centroids[r][1] + jy, 0.0, 1.0);
    a.w = std::clamp(pool.extents[r][0], 1e-4, 1.0);
    a.h = std::clamp(pool.extents[r][1], 1e-4, 1.0);
    if (a.w * a.h > budget.a_max) {
      const double s = std::sqrt(budget.a_max / (a.w * a.h));
      a.w *= s;
      a.h *= s;
    }
  }
  return out;
}

torch::Tensor anchors_to_tensor(std::span<const AnchorQuery> anchors) {
  auto t = torch::empty({static_cast<int64_t>(anchors.size()), 4}, torch::kFloat32);
  auto acc = t.accessor<float, 2>();
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    acc[i][0] = static_cast<float>(anchors[i].x);
    acc[i][1] = static_cast<float>(anchors[i].y);
    acc[i][2] = static_cast<float>(anchors[i].w);
    acc[i][3] = static_cast<float>(anchors[i].h);
  }
  return t;
}

torch::Tensor inverse_sigmoid(const torch::Tensor& x, double eps) {
  auto c = x.clamp(0.0, 1.0);
  return torch::log(c.clamp_min(eps) / (1 - c).clamp_min(eps));
}

torch::Tensor sine_embedding(const torch::Tensor& coords, int dims) {
  auto i = torch::arange(dims, coords.options().requires_grad(false));
  auto dim_t = torch::pow(10000.0, 2.0 * torch::floor(i / 2.0) / dims);
  auto pos = coords.unsqueeze(-1) * (2.0 * M_PI) / dim_t;  // [..., k, dims]
  using torch::indexing::None;
  using torch::indexing::Slice;
  auto s = pos.index({"...", Slice(0, None, 2)}).sin();
  auto c = pos.index({"...", Slice(1, None, 2)}).cos();
  auto inter = torch::stack({s, c}, -1).flatten(-2);  // [..., k, dims]
  return inter.flatten(-2);
}

namespace {

torch::nn::Linear linear(int in, int out) {
  torch::nn::Linear l(in, out);
  torch::nn::init::xavier_uniform_(l->weight);
  torch::nn::init::zeros_(l->bias);
  return l;
}

torch::Tensor split_heads(const torch::Tensor& x, int heads) {
  const auto B = x.size(0), N = x.size(1), D = x.size(2);
  return x.view({B, N, heads, D / heads}).transpose(1, 2);
}

torch::Tensor merge_heads(const torch::Tensor& x) {
  const auto B = x.size(0), h = x.size(1), N = x.size(2), d = x.size(3);
  return x.transpose(1, 2).reshape({B, N, h * d});
}

}  // namespace

DecoderLayerImpl::DecoderLayerImpl(const DecoderConfig& config)
    : width_(config.model_width), heads_(config.num_heads) {
  if (width_ % heads_ != 0) throw ConfigError("decoder model_width must be divisible by num_heads");
  sa_q_ = register_module("sa_q", linear(width_, width_));
  sa_k_ = register_module("sa_k", linear(width_, width_));
  sa_v_ = register_module("sa_v", linear(width_, width_));
  sa_out_ = register_module("sa_out", linear(width_, width_));
  ca_q_ = register_module("ca_q", linear(width_, width_));
  ca_k_ = register_module("ca_k", linear(width_, width_));
  ca_v_ = register_module("ca_v", linear(width_, width_));
  ca_out_ = register_module("ca_out", linear(width_, width_));
  ffn1_ = register_module("ffn1", linear(width_, config.ffn_dim));
  ffn2_ = register_module("ffn2", linear(config.ffn_dim, width_));
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width_})));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width_})));
  norm3_ = register_module("norm3", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width_})));
  // heads start with prior widths of 0.5, 1, 2, 4, ... anchor sizes
  auto spread = torch::arange(heads_, torch::kFloat32) * std::log(2.0) + std::log(0.5);
  log_spread_ = register_parameter("log_spread", spread);
}

torch::Tensor DecoderLayerImpl::forward(const torch::Tensor& content, const torch::Tensor& query_pos,
                                        const torch::Tensor& anchors, const torch::Tensor& memory,
                                        const torch::Tensor& memory_pos, const torch::Tensor& key_xy) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(width_ / heads_));

  auto qk = content + query_pos;
  auto q = split_heads(sa_q_(qk), heads_);
  auto k = split_heads(sa_k_(qk), heads_);
  auto v = split_heads(sa_v_(content), heads_);
  auto sa = torch::matmul((torch::matmul(q, k.transpose(-2, -1)) * scale).softmax(-1), v);
  auto x = norm1_(content + sa_out_(merge_heads(sa)));

  q = split_heads(ca_q_(x + query_pos), heads_);
  k = split_heads(ca_k_(memory + memory_pos), heads_);
  v = split_heads(ca_v_(memory), heads_);
  auto logits = torch::matmul(q, k.transpose(-2, -1)) * scale;  // [B, h, Q, N]

  // Gaussian prior centred on the anchor, widths proportional to its size
  auto spread = log_spread_.exp().to(anchors.dtype()).view({1, heads_, 1, 1});
  auto ax = anchors.select(-1, 0).unsqueeze(1).unsqueeze(-1);  // [B, 1, Q, 1]
  auto ay = anchors.select(-1, 1).unsqueeze(1).unsqueeze(-1);
  auto sx = (anchors.select(-1, 2).unsqueeze(1).unsqueeze(-1) * spread).clamp_min(1e-3);
  auto sy = (anchors.select(-1, 3).unsqueeze(1).unsqueeze(-1) * spread).clamp_min(1e-3);
  auto kx = key_xy.select(-1, 0).to(anchors.dtype()).view({1, 1, 1, -1});
  auto ky = key_xy.select(-1, 1).to(anchors.dtype()).view({1, 1, 1, -1});
  auto prior = -((kx - ax).square() / (2 * sx.square()) + (ky - ay).square() / (2 * sy.square()));

  auto attn = (logits + prior).softmax(-1);
  x = norm2_(x + ca_out_(merge_heads(torch::matmul(attn, v))));
  return norm3_(x + ffn2_(torch::relu(ffn1_(x))));
}

DetrDecoderImpl::DetrDecoderImpl(DecoderConfig config, int feature_channels) : config_(config) {
  const int D = config_.model_width;
  if (D % 2 != 0) throw ConfigError("decoder model_width must be even");
  input_proj_ = register_module("input_proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(feature_channels, D, 1)));
  torch::nn::init::zeros_(input_proj_->bias);
  ref_point_head_ = register_module(
      "ref_point_head", torch::nn::Sequential(linear(2 * D, D), torch::nn::ReLU(), linear(D, D)));
  for (int l = 0; l < config_.num_layers; ++l) {
    layers_.push_back(register_module("layer" + std::to_string(l), DecoderLayer(config_)));
  }
  class_head_ = register_module("class_head", linear(D, 1));
  {
    torch::NoGradGuard no_grad;
    class_head_->bias.fill_(-std::log((1 - 0.01) / 0.01));
  }
  auto last = linear(D, 4);
  torch::nn::init::zeros_(last->weight);
  box_head_ = register_module("box_head", torch::nn::Sequential(linear(D, D), torch::nn::ReLU(),
                                                                linear(D, D), torch::nn::ReLU(), last));
}

DecoderOutput DetrDecoderImpl::forward(const torch::Tensor& features, const torch::Tensor& content,
                                       const torch::Tensor& anchors) {
  if (content.size(1) != anchors.size(1) || content.size(0) != anchors.size(0)) {
    throw ShapeError("decoder: content queries (" + std::to_string(content.size(1)) +
                     ") and anchors (" + std::to_string(anchors.size(1)) + ") disagree");
  }
  const int D = config_.model_width;
  const auto B = features.size(0), H = features.size(2), W = features.size(3);
  auto memory = input_proj_(features).flatten(2).transpose(1, 2);  // [B, N, D]

  auto opts = features.options().requires_grad(false);
  auto ys = (torch::arange(H, opts) + 0.5) / H;
  auto xs = (torch::arange(W, opts) + 0.5) / W;
  auto grid = torch::meshgrid({ys, xs}, "ij");
  auto key_xy = torch::stack({grid[1].flatten(), grid[0].flatten()}, -1);  // [N, 2]
  auto memory_pos = sine_embedding(key_xy, D / 2).unsqueeze(0).expand({B, H * W, D});

  DecoderOutput out;
  auto ref = anchors;
  auto x = content;
  for (auto& layer : layers_) {
    auto query_pos = ref_point_head_->forward(sine_embedding(ref, D / 2));
    x = layer(x, query_pos, ref, memory, memory_pos, key_xy);
    out.logits.push_back(class_head_(x).squeeze(-1));
    auto box = torch::sigmoid(inverse_sigmoid(ref) + box_head_->forward(x));
    out.boxes.push_back(box);
    ref = box.detach();
  }
  if (out.final_logits().size(1) != anchors.size(1)) {
    throw ShapeError("decoder produced a different number of rows than queries");
  }
  return out;
}

std::vector<Detection> to_detections(const torch::Tensor& logits, const torch::Tensor& boxes,
                                     int frame_width, int frame_height) {
  auto scores = logits.detach().to(torch::kFloat64).sigmoid().contiguous();
  auto b = boxes.detach().to(torch::kFloat64).contiguous();
  const auto q = scores.size(0);
  auto sacc = scores.accessor<double, 1>();
  auto bacc = b.accessor<double, 2>();
  std::vector<Detection> out;
  out.reserve(q);
  for (int64_t i = 0; i < q; ++i) {
    Box box = Box::from_center(bacc[i][0] * frame_width, bacc[i][1] * frame_height,
                               bacc[i][2] * frame_width, bacc[i][3] * frame_height);
    box.x1 = std::clamp(box.x1, 0.0, static_cast<double>(frame_width));
    box.x2 = std::clamp(box.x2, 0.0, static_cast<double>(frame_width));
    box.y1 = std::clamp(box.y1, 0.0, static_cast<double>(frame_height));
    box.y2 = std::clamp(box.y2, 0.0, static_cast<double>(frame_height));
    box.x2 = std::max(box.x2, box.x1 + kBoxEps);
    box.y2 = std::max(box.y2, box.y1 + kBoxEps);
    out.push_back({box, sacc[i]});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return out;
}

torch::Tensor dec_query_loss(const torch::Tensor& centers, const CoarseRegionSet& regions) {
  if (regions.empty()) return centers.sum() * 0.0;
  auto c = torch::empty({static_cast<int64_t>(regions.size()), 2}, torch::kFloat64);
  auto acc = c.accessor<double, 2>();
  for (std::size_t i = 0; i < regions.size(); ++i) {
    acc[i][0] = regions.centroids[i][0];
    acc[i][1] = regions.centroids[i][1];
  }
  auto dist = (centers.unsqueeze(1) - c.to(centers.dtype()).unsqueeze(0)).norm(2, -1);  // [Q, C]
  return std::get<0>(dist.min(1)).sum();
}

double dec_query_loss(std::span<const AnchorQuery> queries, const CoarseRegionSet& regions) {
  if (regions.empty()) return 0.0;
  double total = 0.0;
  for (const auto& q : queries) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : regions.centroids) best = std::min(best, std::hypot(q.x - c[0], q.y - c[1]));
    total += best;
  }
  return total;
}

torch::Tensor dec_query_size_loss(const torch::Tensor& sizes, const QueryBudget& budget,
                                  QuerySizeForm form) {
  auto area = sizes.select(-1, 0) * sizes.select(-1, 1);
  if (form == QuerySizeForm::Literal) return (area - budget.a_max).abs().sum();
  return torch::relu(area - budget.a_max).sum();
}

double dec_query_size_loss(std::span<const AnchorQuery> queries, const QueryBudget& budget,
                           QuerySizeForm form) {
  double total = 0.0;
  for (const auto& q : queries) {
    const double d = q.area() - budget.a_max;
    total += form == QuerySizeForm::Literal ? std::abs(d) : std::max(0.0, d);
  }
  return total;
}

}  // namespace c2f::model
