// SPDX-License-Identifier: Apache-2.0
#include "c2fdet/checkpoint.hpp"

#include "c2fdet/box.hpp"
#include "c2fdet/config.hpp"

namespace c2f {

namespace {

constexpr std::int64_t kFormatVersion = 1;

}  // namespace

std::vector<std::pair<std::string, torch::Tensor>> named_weights(torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module.named_parameters(true)) out.emplace_back(item.key(), item.value());
  for (const auto& item : module.named_buffers(true)) out.emplace_back(item.key(), item.value());
  return out;
}

void save_checkpoint(const std::filesystem::path& path, model::Detector& detector,
                     const train::TrainState* state, torch::optim::AdamW* optimizer) {
  torch::serialize::OutputArchive archive;
  archive.write("format_version", c10::IValue(kFormatVersion));
  archive.write("model_config", c10::IValue(config::dump_model_config(detector->config())));
  torch::serialize::OutputArchive weights;
  for (const auto& [name, t] : named_weights(*detector)) weights.write(name, t.detach());
  archive.write("weights", weights);
  if (state) {
    archive.write("step", c10::IValue(static_cast<std::int64_t>(state->step)));
    archive.write("rng_state", c10::IValue(state->rng_state));
    if (optimizer) {
      torch::serialize::OutputArchive opt;
      optimizer->save(opt);
      archive.write("optimizer", opt);
    }
  }
  try {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    archive.save_to(path.string());
  } catch (const c10::Error& e) {
    throw Error("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const train::TrainConfig& train_config) {
  if (!std::filesystem::exists(path)) throw Error("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  LoadedCheckpoint out;
  try {
    archive.load_from(path.string());
    c10::IValue v;
    archive.read("format_version", v);
    if (v.toInt() != kFormatVersion) throw Error("unsupported checkpoint version in " + path.string());
    archive.read("model_config", v);
    const auto model_config = config::parse_model_config(v.toStringRef());

    out.detector = model::Detector(model_config, 0);
    torch::serialize::InputArchive weights;
    archive.read("weights", weights);
    torch::NoGradGuard no_grad;
    for (auto& [name, t] : named_weights(*out.detector)) {
      torch::Tensor stored;
      if (!weights.try_read(name, stored)) throw Error("checkpoint is missing weight '" + name + "'");
      if (stored.sizes() != t.sizes()) throw Error("checkpoint weight '" + name + "' has the wrong shape");
      t.copy_(stored);
    }

    if (archive.try_read("step", v)) {
      train::TrainState state;
      state.step = static_cast<int>(v.toInt());
      archive.read("rng_state", v);
      state.rng_state = v.toStringRef();
      out.state = state;
      out.optimizer = train::make_optimizer(out.detector, train_config);
      torch::serialize::InputArchive opt;
      if (archive.try_read("optimizer", opt)) out.optimizer->load(opt);
    }
  } catch (const c10::Error& e) {
    throw Error("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  return out;
}

}  // namespace c2f
