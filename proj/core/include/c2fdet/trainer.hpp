// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "c2fdet/detector.hpp"
#include "c2fdet/matchloss.hpp"
#include "c2fdet/metrics.hpp"
#include "c2fdet/synthdata.hpp"

namespace c2f::train {

struct TrainConfig {
  double learning_rate = 8e-5;
  double weight_decay = 1e-4;
  /// Steps at which the learning rate is multiplied by lr_decay. Empty means
  /// 60% and 85% of max_steps.
  std::vector<int> lr_milestones;
  double lr_decay = 0.1;
  int clip_length = 4;  ///< consecutive frames per batch
  int max_steps = 1000;
  double augment_prob = 0.5;
  int eval_stride = 4;
  std::uint64_t seed = 0;
  double grad_clip = 0.1;  ///< global gradient norm; <= 0 disables
  int num_threads = 1;
  int log_every = 0;  ///< progress line every n steps; 0 is silent

  void validate() const;
  [[nodiscard]] std::vector<int> milestones() const;
};

struct LossConfig {
  loss::LossWeights weights;
  loss::FocalParams focal;
  double oe_alpha = 2.0;
  double oe_beta = 1.0;
  model::DiceForm dice_form = model::DiceForm::Standard;
  model::BceForm bce_form = model::BceForm::InstanceAware;
  model::QuerySizeForm query_size_form = model::QuerySizeForm::Hinge;
  bool aux_loss = true;

  void validate() const;
};

/// A batch of consecutive frames of one clip.
struct Batch {
  std::vector<synth::Image> frames;
  std::vector<synth::GroundTruthAnnotation> annotations;
};

/// Mirrors every frame and box when a flip is drawn, then applies one
/// brightness/contrast jitter to the whole batch when jitter is drawn. Each
/// of the two is drawn with probability `prob`.
Batch augment(const Batch& batch, std::mt19937_64& rng, double prob);

Box hflip_box(const Box& b, int frame_width);

/// Frames of each clip that contain at least one object.
struct DroneFrameView {
  std::vector<int> clip;                  ///< clip index per entry in frames
  std::vector<std::vector<int>> frames;   ///< per usable clip, frame indices with objects

  explicit DroneFrameView(std::span<const synth::VideoClip> clips);
  [[nodiscard]] bool empty() const { return frames.empty(); }
  [[nodiscard]] std::size_t total_frames() const;
};

/// Draws a window of up to `length` consecutive drone frames from a random clip.
Batch sample_batch(std::span<const synth::VideoClip> clips, const DroneFrameView& view, int length,
                   std::mt19937_64& rng);

struct StepLosses {
  loss::LossTerms terms;
  loss::LossBreakdown breakdown;
};

/// Forward pass and every loss term for one batch.
StepLosses compute_losses(model::Detector& detector, const Batch& batch, const LossConfig& config,
                          std::mt19937_64& rng);

struct LossRecord {
  int step = 0;
  std::string term;
  double value = 0.0;
};

/// Optimizer, step counter and sampler state needed to resume a run.
struct TrainState {
  int step = 0;
  std::string rng_state;
};

struct TrainResult {
  std::vector<LossRecord> history;
  TrainState state;
};

using ProgressFn = std::function<void(int step, const loss::LossBreakdown&)>;

/// Trains `detector` in place. Pass `resume` and an `optimizer` restored from a
/// checkpoint to continue a previous run; otherwise a fresh AdamW is used.
TrainResult train(model::Detector& detector, std::span<const synth::VideoClip> clips,
                  const TrainConfig& config, const LossConfig& loss_config,
                  const TrainState* resume = nullptr, torch::optim::AdamW* optimizer = nullptr,
                  const ProgressFn& progress = {});

std::unique_ptr<torch::optim::AdamW> make_optimizer(model::Detector& detector, const TrainConfig& config);

void write_loss_history(const std::filesystem::path& path, std::span<const LossRecord> history);
std::vector<LossRecord> read_loss_history(const std::filesystem::path& path);

/// Frames with index % stride == 0. Throws ConfigError when stride <= 0.
std::vector<int> eval_frame_indices(int num_frames, int stride);

/// Runs the detector on the evaluated frames of a clip. Each evaluated frame
/// is processed in a window of `batch` consecutive frames starting at it
/// (shifted back at the clip end), so queries are pooled the same way as in
/// training. Query initialization uses a generator seeded with `seed`.
std::vector<FrameDetections> infer_clip(model::Detector& detector, const synth::VideoClip& clip,
                                        int stride, int batch, std::uint64_t seed);

struct ClipPredictions {
  std::string clip;
  std::vector<FrameDetections> frames;
};

std::vector<ClipPredictions> infer(model::Detector& detector, std::span<const synth::VideoClip> clips,
                                   int stride, int batch, std::uint64_t seed);

/// Scores the evaluated frames of every clip. Frames missing from the
/// predictions count as frames without detections.
metrics::MetricsReport score_predictions(std::span<const synth::VideoClip> clips,
                                         std::span<const ClipPredictions> predictions, int stride,
                                         const metrics::EvalOptions& options = {});

metrics::MetricsReport evaluate(model::Detector& detector, std::span<const synth::VideoClip> clips,
                                int stride, int batch, std::uint64_t seed,
                                const metrics::EvalOptions& options = {});

}  // namespace c2f::train
