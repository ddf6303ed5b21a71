// SPDX-License-Identifier: Apache-2.0
#include "c2fdet/backbone.hpp"

#include <algorithm>

#include "c2fdet/box.hpp"

namespace F = torch::nn::functional;

namespace c2f::model {

BackboneConfig BackboneConfig::preset(const std::string& name) {
  BackboneConfig c;
  if (name == "toy") return c;
  // Swin-T/S/B depths (2,2,6,2)/(2,2,18,2)/(2,2,18,2) halved, widths divided by three
  if (name == "swin-t") {
    c.depths = {1, 1, 3, 1};
  } else if (name == "swin-s") {
    c.depths = {1, 1, 9, 1};
  } else if (name == "swin-b") {
    c.embed_dim = 40;
    c.depths = {1, 1, 9, 1};
  } else {
    throw ConfigError("unknown backbone preset '" + name + "' (expected toy|swin-t|swin-s|swin-b)");
  }
  return c;
}

void BackboneConfig::validate() const {
  if (num_stages != 4) throw ConfigError("backbone.num_stages must be 4");
  if (static_cast<int>(depths.size()) != num_stages ||
      static_cast<int>(num_heads.size()) != num_stages) {
    throw ConfigError("backbone.depths and backbone.num_heads need one entry per stage");
  }
  if (embed_dim <= 0 || patch_size <= 0 || window_size <= 0 || fpn_dim <= 0) {
    throw ConfigError("backbone sizes must be positive");
  }
  for (int s = 0; s < num_stages; ++s) {
    if (depths[s] < 1) throw ConfigError("backbone.depths entries must be >= 1");
    const int dim = embed_dim << s;
    if (num_heads[s] < 1 || dim % num_heads[s] != 0) {
      throw ConfigError("stage " + std::to_string(s) + " width " + std::to_string(dim) +
                        " is not divisible by its head count");
    }
  }
}

int BackboneConfig::max_stride() const { return patch_size << (num_stages - 1); }

void BackboneConfig::check_frame(int height, int width) const {
  const int stride = max_stride();
  if (height % stride != 0) {
    throw ShapeError("frame height " + std::to_string(height) + " is not divisible by " +
                     std::to_string(stride));
  }
  if (width % stride != 0) {
    throw ShapeError("frame width " + std::to_string(width) + " is not divisible by " +
                     std::to_string(stride));
  }
}

void trunc_normal_(torch::Tensor& w, double std) {
  torch::NoGradGuard no_grad;
  w.normal_(0.0, std);
  for (int iter = 0; iter < 16; ++iter) {
    auto outside = w.abs() > 2.0 * std;
    if (!outside.any().item<bool>()) break;
    w.masked_scatter_(outside, torch::randn({outside.sum().item<int64_t>()}, w.options()) * std);
  }
  w.clamp_(-2.0 * std, 2.0 * std);
}

namespace {

torch::nn::Linear make_linear(int in, int out, bool bias = true) {
  torch::nn::Linear l(torch::nn::LinearOptions(in, out).bias(bias));
  trunc_normal_(l->weight);
  if (bias) torch::nn::init::zeros_(l->bias);
  return l;
}

torch::nn::Conv2d make_conv(int in, int out, int k, int stride = 1) {
  torch::nn::Conv2d c(torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(stride == 1 ? k / 2 : 0));
  torch::nn::init::zeros_(c->bias);
  return c;
}

torch::Tensor window_partition(const torch::Tensor& x, int ws) {
  const auto B = x.size(0), H = x.size(1), W = x.size(2), C = x.size(3);
  return x.view({B, H / ws, ws, W / ws, ws, C}).permute({0, 1, 3, 2, 4, 5}).reshape({-1, ws * ws, C});
}

torch::Tensor window_reverse(const torch::Tensor& w, int ws, int64_t B, int64_t H, int64_t W) {
  const auto C = w.size(-1);
  return w.view({B, H / ws, W / ws, ws, ws, C}).permute({0, 1, 3, 2, 4, 5}).reshape({B, H, W, C});
}

torch::Tensor relative_index(int ws, int table_ws) {
  auto coords = torch::stack(torch::meshgrid({torch::arange(ws), torch::arange(ws)}, "ij"))
                    .flatten(1);  // [2, n]
  auto rel = coords.unsqueeze(2) - coords.unsqueeze(1);  // [2, n, n]
  auto dy = rel[0] + (table_ws - 1);
  auto dx = rel[1] + (table_ws - 1);
  return dy * (2 * table_ws - 1) + dx;
}

// Region labels for the cyclic-shift trick; tokens from different regions
// must not attend to each other.
torch::Tensor shift_mask(int64_t Hp, int64_t Wp, int ws, int shift) {
  auto labels = torch::zeros({1, Hp, Wp, 1}, torch::kFloat32);
  const int64_t hb[] = {0, Hp - ws, Hp - shift, Hp};
  const int64_t wb[] = {0, Wp - ws, Wp - shift, Wp};
  int cnt = 0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      labels.index({torch::indexing::Slice(), torch::indexing::Slice(hb[i], hb[i + 1]),
                    torch::indexing::Slice(wb[j], wb[j + 1]), torch::indexing::Slice()})
          .fill_(cnt++);
    }
  }
  auto win = window_partition(labels, ws).squeeze(-1);  // [nW, n]
  auto diff = win.unsqueeze(1) - win.unsqueeze(2);
  return torch::where(diff != 0, torch::full_like(diff, -100.0), torch::zeros_like(diff));
}

}  // namespace

WindowAttentionImpl::WindowAttentionImpl(int dim, int heads, int window_size)
    : dim_(dim), heads_(heads), window_size_(window_size) {
  qkv_ = register_module("qkv", make_linear(dim, 3 * dim));
  proj_ = register_module("proj", make_linear(dim, dim));
  bias_table_ = register_parameter(
      "relative_position_bias_table",
      torch::zeros({(2 * window_size - 1) * (2 * window_size - 1), heads}));
  trunc_normal_(bias_table_);
}

torch::Tensor WindowAttentionImpl::forward(const torch::Tensor& x, int ws, const torch::Tensor& mask) {
  const auto Bw = x.size(0), n = x.size(1);
  const auto hd = dim_ / heads_;
  auto qkv = qkv_(x).view({Bw, n, 3, heads_, hd}).permute({2, 0, 3, 1, 4});
  auto q = qkv[0] * (1.0 / std::sqrt(static_cast<double>(hd)));
  auto k = qkv[1];
  auto v = qkv[2];
  auto attn = torch::matmul(q, k.transpose(-2, -1));  // [Bw, h, n, n]

  auto idx = relative_index(ws, window_size_).flatten();
  auto bias = bias_table_.index_select(0, idx).view({n, n, heads_}).permute({2, 0, 1});
  attn = attn + bias.unsqueeze(0).to(attn.dtype());
  if (mask.defined()) {
    const auto nw = mask.size(0);
    attn = attn.view({Bw / nw, nw, heads_, n, n}) + mask.unsqueeze(1).unsqueeze(0).to(attn.dtype());
    attn = attn.view({Bw, heads_, n, n});
  }
  attn = attn.softmax(-1);
  auto out = torch::matmul(attn, v).transpose(1, 2).reshape({Bw, n, dim_});
  return proj_(out);
}

TransformerBlockImpl::TransformerBlockImpl(int dim, int heads, int window_size, bool shifted,
                                           double mlp_ratio)
    : window_size_(window_size), shifted_(shifted) {
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  attn_ = register_module("attn", WindowAttention(dim, heads, window_size));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  const int hidden = static_cast<int>(dim * mlp_ratio);
  fc1_ = register_module("fc1", make_linear(dim, hidden));
  fc2_ = register_module("fc2", make_linear(hidden, dim));
}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& x) {
  const auto B = x.size(0), H = x.size(1), W = x.size(2);
  const int ws = static_cast<int>(std::min<int64_t>({window_size_, H, W}));
  const int shift = (shifted_ && H > ws && W > ws) ? ws / 2 : 0;

  auto h = norm1_(x);
  const auto pad_b = (ws - H % ws) % ws;
  const auto pad_r = (ws - W % ws) % ws;
  if (pad_b > 0 || pad_r > 0) h = F::pad(h, F::PadFuncOptions({0, 0, 0, pad_r, 0, pad_b}));
  const auto Hp = H + pad_b, Wp = W + pad_r;

  torch::Tensor mask;
  if (shift > 0) {
    h = torch::roll(h, {-shift, -shift}, {1, 2});
    mask = shift_mask(Hp, Wp, ws, shift);
  }
  auto windows = attn_(window_partition(h, ws), ws, mask);
  h = window_reverse(windows, ws, B, Hp, Wp);
  if (shift > 0) h = torch::roll(h, {shift, shift}, {1, 2});
  if (pad_b > 0 || pad_r > 0) {
    h = h.index({torch::indexing::Slice(), torch::indexing::Slice(0, H), torch::indexing::Slice(0, W)})
            .contiguous();
  }
  auto y = x + h;
  return y + fc2_(F::gelu(fc1_(norm2_(y))));
}

PatchMergingImpl::PatchMergingImpl(int dim) {
  norm_ = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({4 * dim})));
  reduction_ = register_module("reduction", make_linear(4 * dim, 2 * dim, false));
}

torch::Tensor PatchMergingImpl::forward(const torch::Tensor& x) {
  using torch::indexing::None;
  using torch::indexing::Slice;
  auto h = x;
  if (h.size(1) % 2 || h.size(2) % 2) {
    h = F::pad(h, F::PadFuncOptions({0, 0, 0, h.size(2) % 2, 0, h.size(1) % 2}));
  }
  auto x0 = h.index({Slice(), Slice(0, None, 2), Slice(0, None, 2)});
  auto x1 = h.index({Slice(), Slice(1, None, 2), Slice(0, None, 2)});
  auto x2 = h.index({Slice(), Slice(0, None, 2), Slice(1, None, 2)});
  auto x3 = h.index({Slice(), Slice(1, None, 2), Slice(1, None, 2)});
  return reduction_(norm_(torch::cat({x0, x1, x2, x3}, -1)));
}

BackboneImpl::BackboneImpl(BackboneConfig config) : config_(std::move(config)) {
  config_.validate();
  const int C = config_.embed_dim;
  patch_embed_ = register_module(
      "patch_embed", make_conv(3, C, config_.patch_size, config_.patch_size));
  embed_norm_ = register_module("embed_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({C})));

  for (int s = 0; s < config_.num_stages; ++s) {
    const int dim = C << s;
    if (s > 0) {
      merges_.push_back(register_module("merge" + std::to_string(s), PatchMerging(dim / 2)));
    }
    std::vector<TransformerBlock> stage;
    for (int b = 0; b < config_.depths[s]; ++b) {
      stage.push_back(register_module(
          "stage" + std::to_string(s) + "_block" + std::to_string(b),
          TransformerBlock(dim, config_.num_heads[s], config_.window_size, b % 2 == 1,
                           config_.mlp_ratio)));
    }
    blocks_.push_back(std::move(stage));
    out_norms_.push_back(register_module("stage" + std::to_string(s) + "_norm",
                                         torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}))));
    lateral_.push_back(register_module("fpn_lateral" + std::to_string(s),
                                       make_conv(dim, config_.fpn_dim, 1)));
    fpn_out_.push_back(register_module("fpn_out" + std::to_string(s),
                                       make_conv(config_.fpn_dim, config_.fpn_dim, 3)));
  }
  fuse_ = register_module("fpn_fuse", make_conv(config_.fpn_dim, config_.fpn_dim, 3));
}

std::vector<int> BackboneImpl::stage_channels() const {
  std::vector<int> out;
  for (int s = 0; s < config_.num_stages; ++s) out.push_back(config_.embed_dim << s);
  return out;
}

FeaturePyramid BackboneImpl::forward(const torch::Tensor& frames) {
  if (frames.dim() != 4 || frames.size(1) != 3) {
    throw ShapeError("backbone expects frames shaped [B, 3, H, W]");
  }
  config_.check_frame(static_cast<int>(frames.size(2)), static_cast<int>(frames.size(3)));

  FeaturePyramid out;
  auto x = embed_norm_(patch_embed_(frames).permute({0, 2, 3, 1}));
  for (int s = 0; s < config_.num_stages; ++s) {
    if (s > 0) x = merges_[s - 1](x);
    for (auto& blk : blocks_[s]) x = blk(x);
    out.stages.push_back(out_norms_[s](x).permute({0, 3, 1, 2}).contiguous());
  }

  std::vector<torch::Tensor> lat(config_.num_stages);
  for (int s = 0; s < config_.num_stages; ++s) lat[s] = lateral_[s](out.stages[s]);
  for (int s = config_.num_stages - 2; s >= 0; --s) {
    lat[s] = lat[s] + F::interpolate(lat[s + 1], F::InterpolateFuncOptions()
                                                     .size(std::vector<int64_t>{lat[s].size(2), lat[s].size(3)})
                                                     .mode(torch::kNearest));
  }
  for (int s = 0; s < config_.num_stages; ++s) out.levels.push_back(fpn_out_[s](lat[s]));

  const std::vector<int64_t> size{out.levels[0].size(2), out.levels[0].size(3)};
  auto sum = out.levels[0];
  for (int s = 1; s < config_.num_stages; ++s) {
    sum = sum + F::interpolate(out.levels[s], F::InterpolateFuncOptions()
                                                  .size(size)
                                                  .mode(torch::kBilinear)
                                                  .align_corners(false));
  }
  out.fused = fuse_(sum);
  return out;
}

std::vector<torch::Tensor> last_three_stage_features(const FeaturePyramid& pyramid) {
  if (pyramid.stages.size() < 3) throw ShapeError("pyramid has fewer than three stages");
  const auto n = pyramid.stages.size();
  return {pyramid.stages[n - 3], pyramid.stages[n - 2], pyramid.stages[n - 1]};
}

}  // namespace c2f::model
