// SPDX-License-Identifier: Apache-2.0
#include "c2fdet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "c2fdet/box.hpp"
#include "c2fdet/dataset.hpp"

namespace c2f::train {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (!(augment_prob >= 0.0 && augment_prob <= 1.0)) throw ConfigError("augment_prob must lie in [0, 1]");
  if (clip_length < 1) throw ConfigError("clip_length must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (eval_stride <= 0) throw ConfigError("eval_stride must be > 0");
  if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be > 0");
  if (num_threads < 1) throw ConfigError("num_threads must be >= 1");
  if (log_every < 0) throw ConfigError("log_every must be >= 0");
  for (int m : lr_milestones) {
    if (m < 0) throw ConfigError("lr_milestones must be >= 0");
  }
}

std::vector<int> TrainConfig::milestones() const {
  if (!lr_milestones.empty()) {
    auto m = lr_milestones;
    std::sort(m.begin(), m.end());
    return m;
  }
  if (max_steps == 0) return {};
  return {static_cast<int>(std::lround(0.6 * max_steps)), static_cast<int>(std::lround(0.85 * max_steps))};
}

void LossConfig::validate() const {
  weights.validate();
  model::OELossWeights(oe_alpha, oe_beta);
  if (focal.gamma < 0.0) throw ConfigError("focal gamma must be >= 0");
  if (focal.alpha > 1.0) throw ConfigError("focal alpha must be <= 1");
}

Box hflip_box(const Box& b, int frame_width) {
  return {frame_width - b.x2, b.y1, frame_width - b.x1, b.y2};
}

Batch augment(const Batch& batch, std::mt19937_64& rng, double prob) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const bool flip = u01(rng) < prob;
  const bool jitter = u01(rng) < prob;
  const double brightness = (u01(rng) - 0.5) * 0.2 * 255.0;
  const double contrast = 0.8 + 0.4 * u01(rng);
  if (!flip && !jitter) return batch;

  Batch out = batch;
  for (auto& img : out.frames) {
    if (flip) {
      for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width / 2; ++x) {
          for (int c = 0; c < 3; ++c) std::swap(img.at(x, y, c), img.at(img.width - 1 - x, y, c));
        }
      }
    }
    if (jitter) {
      for (auto& v : img.rgb) {
        const double j = (v - 128.0) * contrast + 128.0 + brightness;
        v = static_cast<std::uint8_t>(std::clamp(std::lround(j), 0L, 255L));
      }
    }
  }
  if (flip) {
    for (std::size_t i = 0; i < out.annotations.size(); ++i) {
      for (auto& b : out.annotations[i].boxes) b = hflip_box(b, out.frames[i].width);
    }
  }
  return out;
}

DroneFrameView::DroneFrameView(std::span<const synth::VideoClip> clips) {
  for (std::size_t c = 0; c < clips.size(); ++c) {
    std::vector<int> with_objects;
    for (const auto& ann : clips[c].annotations) {
      if (!ann.boxes.empty()) with_objects.push_back(ann.frame_index);
    }
    if (with_objects.empty()) continue;
    clip.push_back(static_cast<int>(c));
    frames.push_back(std::move(with_objects));
  }
}

std::size_t DroneFrameView::total_frames() const {
  std::size_t n = 0;
  for (const auto& f : frames) n += f.size();
  return n;
}

Batch sample_batch(std::span<const synth::VideoClip> clips, const DroneFrameView& view, int length,
                   std::mt19937_64& rng) {
  if (view.empty()) throw DatasetError("dataset has no frames with objects");
  std::uniform_int_distribution<std::size_t> pick(0, view.frames.size() - 1);
  const std::size_t k = pick(rng);
  const auto& list = view.frames[k];
  const auto& clip = clips[view.clip[k]];
  const int n = static_cast<int>(list.size());
  const int len = std::min(length, n);
  std::uniform_int_distribution<int> start_dist(0, n - len);
  const int start = start_dist(rng);
  Batch batch;
  for (int i = start; i < start + len; ++i) {
    batch.frames.push_back(clip.frames[list[i]]);
    batch.annotations.push_back(clip.annotations[list[i]]);
  }
  return batch;
}

StepLosses compute_losses(model::Detector& detector, const Batch& batch, const LossConfig& config,
                          std::mt19937_64& rng) {
  const auto& mc = detector->config();
  auto x = model::frames_to_tensor(batch.frames);
  auto out = detector->forward(x, rng);
  const auto B = x.size(0);
  const FrameShape shape = batch.frames.front().shape();

  std::vector<torch::Tensor> gts;
  double total_gts = 0.0;
  for (const auto& ann : batch.annotations) {
    gts.push_back(model::boxes_to_tensor(ann.boxes, shape));
    total_gts += static_cast<double>(ann.boxes.size());
  }
  const double norm = std::max(1.0, total_gts);

  StepLosses res;
  auto& t = res.terms;
  const auto& dec = out.decoder;
  const std::size_t first = config.aux_loss ? 0 : dec.logits.size() - 1;
  for (std::size_t l = first; l < dec.logits.size(); ++l) {
    for (int64_t b = 0; b < B; ++b) {
      auto logits = dec.logits[l][b];
      auto boxes = dec.boxes[l][b];
      auto match = loss::hungarian_match(logits, boxes, gts[b], config.weights, config.focal);
      auto cls = loss::focal_loss(logits, match, config.focal, norm);
      auto reg = loss::reg_terms(boxes, gts[b], match, norm);
      t.cls = t.cls.defined() ? t.cls + cls : cls;
      t.l1 = t.l1.defined() ? t.l1 + reg.l1 : reg.l1;
      t.giou = t.giou.defined() ? t.giou + reg.giou : reg.giou;
    }
  }

  if (mc.use_oen) {
    const model::OELossWeights oe_weights(config.oe_alpha, config.oe_beta);
    const int mh = static_cast<int>(out.score_map.size(1));
    const int mw = static_cast<int>(out.score_map.size(2));
    for (int64_t b = 0; b < B; ++b) {
      auto gt = synth::gt_mask_at(batch.annotations[b], shape, mw, mh);
      auto oe = model::oe_loss(out.score_map[b], gt, oe_weights, config.dice_form, config.bce_form);
      t.oe = t.oe.defined() ? t.oe + oe : oe;
    }
    t.oe = t.oe / static_cast<double>(B);
  }

  if (mc.query_losses) {
    // the anchors entering the last layer: the previous layer's boxes, or the
    // initial anchors for a single-layer decoder
    const auto& queries = dec.boxes.size() >= 2 ? dec.boxes[dec.boxes.size() - 2] : out.anchors;
    for (int64_t b = 0; b < B; ++b) {
      using torch::indexing::Slice;
      auto centers = queries[b].index({Slice(), Slice(0, 2)});
      auto sizes = queries[b].index({Slice(), Slice(2, 4)});
      auto q = model::dec_query_loss(centers, out.regions);
      auto s = model::dec_query_size_loss(sizes, mc.budget(), config.query_size_form);
      t.query = t.query.defined() ? t.query + q : q;
      t.query_size = t.query_size.defined() ? t.query_size + s : s;
    }
    t.query = t.query / static_cast<double>(B);
    t.query_size = t.query_size / static_cast<double>(B);
  }

  res.breakdown = loss::total_loss(t, config.weights);
  return res;
}

std::unique_ptr<torch::optim::AdamW> make_optimizer(model::Detector& detector, const TrainConfig& config) {
  return std::make_unique<torch::optim::AdamW>(
      detector->parameters(),
      torch::optim::AdamWOptions(config.learning_rate).weight_decay(config.weight_decay));
}

namespace {

void set_lr(torch::optim::Optimizer& opt, double lr) {
  for (auto& group : opt.param_groups()) {
    static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
  }
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

TrainResult train(model::Detector& detector, std::span<const synth::VideoClip> clips,
                  const TrainConfig& config, const LossConfig& loss_config, const TrainState* resume,
                  torch::optim::AdamW* optimizer, const ProgressFn& progress) {
  config.validate();
  loss_config.validate();
  if (clips.empty()) throw DatasetError("training dataset is empty");
  const DroneFrameView view(clips);
  if (view.empty()) throw DatasetError("training dataset has no frames with objects");
  torch::set_num_threads(config.num_threads);

  std::unique_ptr<torch::optim::AdamW> owned;
  if (!optimizer) {
    owned = make_optimizer(detector, config);
    optimizer = owned.get();
  }

  TrainResult result;
  std::mt19937_64 rng(config.seed);
  int step = 0;
  if (resume) {
    step = resume->step;
    std::istringstream is(resume->rng_state);
    is >> rng;
    if (!is) throw Error("corrupt sampler state in checkpoint");
  }
  const auto milestones = config.milestones();
  auto params = detector->parameters();
  detector->train();

  for (; step < config.max_steps; ++step) {
    const auto passed = std::count_if(milestones.begin(), milestones.end(), [&](int m) { return m <= step; });
    set_lr(*optimizer, config.learning_rate * std::pow(config.lr_decay, static_cast<double>(passed)));

    auto batch = augment(sample_batch(clips, view, config.clip_length, rng), rng, config.augment_prob);
    auto losses = compute_losses(detector, batch, loss_config, rng);
    for (const auto& [term, value] : losses.breakdown.raw) {
      if (!std::isfinite(value)) {
        throw Error("non-finite loss term '" + term + "' at step " + std::to_string(step));
      }
    }
    optimizer->zero_grad();
    losses.breakdown.total.backward();
    if (config.grad_clip > 0) torch::nn::utils::clip_grad_norm_(params, config.grad_clip);
    optimizer->step();

    for (const auto& [term, value] : losses.breakdown.raw) result.history.push_back({step, term, value});
    result.history.push_back({step, "total", losses.breakdown.total.item<double>()});
    if (progress) progress(step, losses.breakdown);
  }
  result.state.step = step;
  result.state.rng_state = rng_to_string(rng);
  return result;
}

void write_loss_history(const std::filesystem::path& path, std::span<const LossRecord> history) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "step term value\n";
  for (const auto& r : history) os << r.step << ' ' << r.term << ' ' << format_number(r.value) << '\n';
  if (!os) throw Error("failed writing " + path.string());
}

std::vector<LossRecord> read_loss_history(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  std::vector<LossRecord> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    LossRecord r;
    if (!(ls >> r.step >> r.term >> r.value)) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": malformed loss history row");
    }
    out.push_back(r);
  }
  return out;
}

std::vector<int> eval_frame_indices(int num_frames, int stride) {
  if (stride <= 0) throw ConfigError("eval_stride must be > 0, got " + std::to_string(stride));
  std::vector<int> out;
  for (int i = 0; i < num_frames; i += stride) out.push_back(i);
  return out;
}

std::vector<FrameDetections> infer_clip(model::Detector& detector, const synth::VideoClip& clip, int stride,
                                        int batch, std::uint64_t seed) {
  const int n = static_cast<int>(clip.size());
  const auto indices = eval_frame_indices(n, stride);
  if (batch < 1) throw ConfigError("inference batch must be >= 1");
  torch::NoGradGuard no_grad;
  detector->eval();
  std::mt19937_64 rng(seed);
  std::vector<FrameDetections> out;
  const FrameShape shape = clip.shape();
  const int len = std::min(batch, n);
  for (int idx : indices) {
    // same temporal context as training: a run of consecutive frames
    const int start = std::min(idx, n - len);
    std::vector<const synth::Image*> frames;
    for (int j = start; j < start + len; ++j) frames.push_back(&clip.frames[j]);
    auto res = detector->forward(model::frames_to_tensor(frames), rng);
    const auto b = static_cast<int64_t>(idx - start);
    out.push_back({idx, model::to_detections(res.decoder.final_logits()[b], res.decoder.final_boxes()[b],
                                             shape.width, shape.height)});
  }
  return out;
}

std::vector<ClipPredictions> infer(model::Detector& detector, std::span<const synth::VideoClip> clips,
                                   int stride, int batch, std::uint64_t seed) {
  std::vector<ClipPredictions> out;
  for (const auto& clip : clips) out.push_back({clip.name, infer_clip(detector, clip, stride, batch, seed)});
  return out;
}

metrics::MetricsReport score_predictions(std::span<const synth::VideoClip> clips,
                                         std::span<const ClipPredictions> predictions, int stride,
                                         const metrics::EvalOptions& options) {
  std::map<std::string, const ClipPredictions*> by_name;
  for (const auto& p : predictions) by_name[p.clip] = &p;
  std::vector<metrics::ImageEval> images;
  for (const auto& clip : clips) {
    auto it = by_name.find(clip.name);
    if (it == by_name.end()) throw DatasetError("no predictions for clip '" + clip.name + "'");
    std::map<int, const std::vector<Detection>*> dets;
    for (const auto& f : it->second->frames) dets[f.frame_index] = &f.detections;
    for (int idx : eval_frame_indices(static_cast<int>(clip.size()), stride)) {
      metrics::ImageEval img;
      img.gts = clip.annotations[idx].boxes;
      if (auto d = dets.find(idx); d != dets.end()) img.detections = *d->second;
      images.push_back(std::move(img));
    }
  }
  return metrics::evaluate(images, options);
}

metrics::MetricsReport evaluate(model::Detector& detector, std::span<const synth::VideoClip> clips, int stride,
                                int batch, std::uint64_t seed, const metrics::EvalOptions& options) {
  const auto preds = infer(detector, clips, stride, batch, seed);
  return score_predictions(clips, preds, stride, options);
}

}  // namespace c2f::train
