// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "c2fdet/detector.hpp"
#include "c2fdet/synthdata.hpp"
#include "c2fdet/trainer.hpp"

namespace c2f::config {

struct DatasetConfig {
  std::string root = "data";
  int num_clips = 4;
  int empty_clips = 0;  ///< extra clips without objects

  void validate() const;
};

struct EvalConfig {
  double iou_threshold = 0.5;
  std::optional<double> fppi_threshold;  ///< defaults to the best-F1 threshold
  int batch = 4;                         ///< consecutive frames per forward pass
  std::uint64_t seed = 0;                ///< query initialization at inference

  void validate() const;
};

struct AblateConfig {
  std::vector<std::string> variants{"baseline", "oen", "query_init", "full"};
  std::vector<int> resolutions{128, 192, 256};  ///< longer frame side
  std::string resolution_variant = "full";
  int resolution_max_steps = -1;  ///< -1 uses train.max_steps
  int holdout_clips = 0;          ///< evaluate on fresh clips; 0 scores the training clips

  void validate() const;
};

/// Everything a run needs. Serialized as JSON with one object per section.
struct ExperimentConfig {
  synth::SceneConfig scene;
  DatasetConfig dataset;
  model::ModelConfig model;
  train::LossConfig loss;
  train::TrainConfig train;
  EvalConfig eval;
  AblateConfig ablate;

  void validate() const;
};

/// Parses a config document. Missing keys keep their defaults; unknown keys
/// and wrongly typed values throw ConfigError naming the dotted key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Pretty-printed JSON with every key resolved.
std::string dump_config(const ExperimentConfig& config);

/// Applies `section.key=value` (nested keys use more dots). The value is read
/// as JSON when it parses, otherwise as a string.
void apply_override(ExperimentConfig& config, const std::string& assignment);

std::string dump_model_config(const model::ModelConfig& config);
model::ModelConfig parse_model_config(const std::string& text);

/// Frame size whose longer side is `longer_side`, keeping the 4:3 aspect and
/// rounding the shorter side to a multiple of `multiple`.
FrameShape resolution_shape(int longer_side, int multiple);

}  // namespace c2f::config
