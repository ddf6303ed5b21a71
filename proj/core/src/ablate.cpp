// SPDX-License-Identifier: Apache-2.0
#include "c2fdet/ablate.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include "c2fdet/detector.hpp"
#include "c2fdet/trainer.hpp"

namespace c2f::ablate {

AblationRow train_and_evaluate(const config::ExperimentConfig& config, std::span<const synth::VideoClip> train_clips,
                               std::span<const synth::VideoClip> eval_clips, const std::string& label,
                               const LogFn& log) {
  const auto start = std::chrono::steady_clock::now();
  auto detector = model::make_detector(config.model, config.train.seed);
  train::ProgressFn progress;
  if (log && config.train.log_every > 0) {
    progress = [&](int step, const loss::LossBreakdown& b) {
      if ((step + 1) % config.train.log_every != 0) return;
      std::ostringstream os;
      os << label << " step " << step + 1 << " loss " << b.total.item<double>();
      for (const auto& [k, v] : b.raw) os << ' ' << k << '=' << v;
      log(os.str());
    };
  }
  train::train(detector, train_clips, config.train, config.loss, nullptr, nullptr, progress);
  const auto seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  metrics::EvalOptions options{config.eval.iou_threshold, config.eval.fppi_threshold};
  auto report = train::evaluate(detector, eval_clips.empty() ? train_clips : eval_clips, config.train.eval_stride,
                                config.eval.batch, config.eval.seed, options);
  if (log) {
    std::ostringstream os;
    os << label << " f1 " << report.f1 << " ap50 " << report.ap50 << " (" << seconds << " s)";
    log(os.str());
  }
  return {label, report, seconds};
}

AblationData make_ablation_data(const config::ExperimentConfig& config) {
  AblationData data;
  data.train = synth::generate_clips(config.scene, config.dataset.num_clips, config.dataset.empty_clips);
  if (config.ablate.holdout_clips > 0) {
    auto scene = config.scene;
    scene.rng_seed = synth::clip_seed(config.scene.rng_seed, -1);
    data.eval = synth::generate_clips(scene, config.ablate.holdout_clips);
  }
  return data;
}

std::vector<AblationRow> run_variants(const config::ExperimentConfig& config,
                                      std::span<const synth::VideoClip> train_clips,
                                      std::span<const synth::VideoClip> eval_clips, const LogFn& log) {
  std::vector<AblationRow> rows;
  for (const auto& name : config.ablate.variants) {
    auto c = config;
    c.model.apply_variant(model::variant_from_string(name));
    rows.push_back(train_and_evaluate(c, train_clips, eval_clips, name, log));
  }
  return rows;
}

std::vector<AblationRow> run_resolution_sweep(const config::ExperimentConfig& config, const LogFn& log) {
  std::vector<AblationRow> rows;
  for (int r : config.ablate.resolutions) {
    auto c = config;
    const auto shape = config::resolution_shape(r, c.model.backbone.max_stride());
    c.scene.frame_width = shape.width;
    c.scene.frame_height = shape.height;
    c.model.apply_variant(model::variant_from_string(config.ablate.resolution_variant));
    if (config.ablate.resolution_max_steps >= 0) c.train.max_steps = config.ablate.resolution_max_steps;
    c.validate();
    const auto data = make_ablation_data(c);
    rows.push_back(train_and_evaluate(c, data.train, data.eval,
                                      std::to_string(shape.width) + "x" + std::to_string(shape.height), log));
  }
  return rows;
}

std::string format_table(std::span<const AblationRow> rows, const std::string& first_column) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %9s %9s %9s %9s %9s %9s\n", first_column.c_str(), "precision", "recall",
                "f1", "ap50", "fppi", "seconds");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-12s %9.4f %9.4f %9.4f %9.4f %9.4f %9.1f\n", r.label.c_str(),
                  r.report.precision, r.report.recall, r.report.f1, r.report.ap50, r.report.fppi, r.train_seconds);
    os << line;
  }
  return os.str();
}

}  // namespace c2f::ablate
