// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include <torch/torch.h>

#include "c2fdet/detector.hpp"
#include "c2fdet/trainer.hpp"

namespace c2f {

/// A single archive holding the model config, every named weight and,
/// optionally, the optimizer and sampler state for resuming.
struct LoadedCheckpoint {
  model::Detector detector{nullptr};
  std::optional<train::TrainState> state;
  std::unique_ptr<torch::optim::AdamW> optimizer;  ///< set when state is present
};

void save_checkpoint(const std::filesystem::path& path, model::Detector& detector,
                     const train::TrainState* state = nullptr, torch::optim::AdamW* optimizer = nullptr);

/// The optimizer is rebuilt with `train_config` before its state is restored.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const train::TrainConfig& train_config = {});

/// Named weights of a module, flattened to (name, tensor) in registration order.
std::vector<std::pair<std::string, torch::Tensor>> named_weights(torch::nn::Module& module);

}  // namespace c2f
