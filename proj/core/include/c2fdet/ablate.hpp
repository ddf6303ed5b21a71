// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "c2fdet/config.hpp"
#include "c2fdet/metrics.hpp"
#include "c2fdet/synthdata.hpp"

namespace c2f::ablate {

struct AblationRow {
  std::string label;
  metrics::MetricsReport report;
  double train_seconds = 0.0;
};

using LogFn = std::function<void(const std::string&)>;

/// Trains one model for `config` from its seed and scores it on `eval_clips`.
AblationRow train_and_evaluate(const config::ExperimentConfig& config, std::span<const synth::VideoClip> train_clips,
                               std::span<const synth::VideoClip> eval_clips, const std::string& label,
                               const LogFn& log = {});

/// One row per entry of config.ablate.variants, all trained with the same
/// seed on the same clips.
std::vector<AblationRow> run_variants(const config::ExperimentConfig& config,
                                      std::span<const synth::VideoClip> train_clips,
                                      std::span<const synth::VideoClip> eval_clips, const LogFn& log = {});

/// One row per entry of config.ablate.resolutions. Each resolution gets a
/// freshly generated dataset with the same seeds at that frame size.
std::vector<AblationRow> run_resolution_sweep(const config::ExperimentConfig& config, const LogFn& log = {});

/// Clips for training and, when holdout_clips > 0, a disjoint evaluation set.
struct AblationData {
  std::vector<synth::VideoClip> train;
  std::vector<synth::VideoClip> eval;  ///< empty: score on the training clips
};
AblationData make_ablation_data(const config::ExperimentConfig& config);

/// Whitespace-aligned table: label, precision, recall, f1, ap50, fppi, seconds.
std::string format_table(std::span<const AblationRow> rows, const std::string& first_column);

}  // namespace c2f::ablate
