// SPDX-License-Identifier: Apache-2.0
// Small configurations that keep model-level tests fast.
#pragma once

#include "c2fdet/config.hpp"
#include "c2fdet/detector.hpp"
#include "c2fdet/synthdata.hpp"

namespace c2f::fixtures {

inline model::ModelConfig tiny_model() {
  model::ModelConfig m;
  m.backbone.embed_dim = 8;
  m.backbone.num_heads = {1, 1, 2, 2};
  m.backbone.fpn_dim = 16;
  m.oen.width = 16;
  m.oen.out_channels = 8;
  m.decoder.num_layers = 2;
  m.decoder.num_heads = 2;
  m.decoder.model_width = 32;
  m.decoder.ffn_dim = 64;
  m.decoder.num_queries = 20;
  return m;
}

inline synth::SceneConfig tiny_scene(std::uint64_t seed = 0) {
  synth::SceneConfig s;
  s.frame_width = 96;
  s.frame_height = 64;
  s.clip_length = 6;
  s.object_area_fraction_range = {0.004, 0.008};
  s.rng_seed = seed;
  return s;
}

inline config::ExperimentConfig tiny_experiment() {
  config::ExperimentConfig c;
  c.scene = tiny_scene(3);
  c.model = tiny_model();
  c.dataset.num_clips = 2;
  c.train.max_steps = 3;
  c.train.clip_length = 2;
  return c;
}

}  // namespace c2f::fixtures
