// SPDX-License-Identifier: Apache-2.0
// c2fdet: generate synthetic data, train, evaluate, infer, visualize, ablate.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "c2fdet/ablate.hpp"
#include "c2fdet/box.hpp"
#include "c2fdet/checkpoint.hpp"
#include "c2fdet/config.hpp"
#include "c2fdet/dataset.hpp"
#include "c2fdet/metrics.hpp"
#include "c2fdet/trainer.hpp"
#include "c2fdet/visualize.hpp"

namespace fs = std::filesystem;
using namespace c2f;

namespace {

struct Common {
  std::string config_path;
  std::string output_dir;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "JSON config file (defaults apply when omitted)");
  cmd->add_option("-o,--output", c.output_dir, "output directory")->required();
  cmd->add_option("-s,--set", c.overrides, "override, e.g. train.max_steps=200")->take_all();
}

config::ExperimentConfig resolve(const Common& c, const std::vector<std::string>& extra = {}) {
  config::ExperimentConfig cfg;
  if (!c.config_path.empty()) cfg = config::load_config(c.config_path);
  for (const auto& o : c.overrides) config::apply_override(cfg, o);
  for (const auto& o : extra) config::apply_override(cfg, o);
  cfg.validate();
  fs::create_directories(c.output_dir);
  std::ofstream os(fs::path(c.output_dir) / "resolved_config.json");
  os << config::dump_config(cfg);
  if (!os) throw Error("cannot write resolved config to " + c.output_dir);
  return cfg;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

metrics::EvalOptions eval_options(const config::ExperimentConfig& cfg) {
  return {cfg.eval.iou_threshold, cfg.eval.fppi_threshold};
}

void write_report_files(const fs::path& dir, const metrics::MetricsReport& report) {
  metrics::write_report(dir / "report.txt", report);
  write_png(dir / "pr_curve.png", viz::plot_pr_curve(report));
  std::cout << metrics::format_report(report);
}

int run_generate(const Common& c, std::optional<std::uint64_t> seed, std::optional<int> clips) {
  std::vector<std::string> extra;
  if (seed) extra.push_back("scene.rng_seed=" + std::to_string(*seed));
  if (clips) extra.push_back("dataset.num_clips=" + std::to_string(*clips));
  const auto cfg = resolve(c, extra);
  const auto data = synth::generate_clips(cfg.scene, cfg.dataset.num_clips, cfg.dataset.empty_clips);
  const auto manifest = write_dataset(data, c.output_dir);
  std::cout << "wrote " << manifest.clips.size() << " clips to " << c.output_dir << "\n";
  return 0;
}

std::vector<synth::VideoClip> load_data(const std::string& data_dir, const config::ExperimentConfig& cfg) {
  return read_dataset(data_dir.empty() ? fs::path(cfg.dataset.root) : fs::path(data_dir));
}

int run_train(const Common& c, const std::string& data_dir, const std::string& variant, const std::string& resume,
              bool do_eval) {
  std::vector<std::string> extra;
  if (!variant.empty()) {
    model::ModelConfig m;
    m.apply_variant(model::variant_from_string(variant));
    auto flag = [](bool b) { return std::string(b ? "true" : "false"); };
    extra = {"model.use_oen=" + flag(m.use_oen), "model.query_init=" + flag(m.query_init),
             "model.query_losses=" + flag(m.query_losses)};
  }
  const auto cfg = resolve(c, extra);
  const auto clips = load_data(data_dir, cfg);
  const fs::path out(c.output_dir);

  model::Detector detector{nullptr};
  std::unique_ptr<torch::optim::AdamW> optimizer;
  std::optional<train::TrainState> state;
  if (!resume.empty()) {
    auto loaded = load_checkpoint(resume, cfg.train);
    if (!loaded.state) throw Error("checkpoint " + resume + " has no training state to resume");
    detector = loaded.detector;
    optimizer = std::move(loaded.optimizer);
    state = loaded.state;
  } else {
    detector = model::make_detector(cfg.model, cfg.train.seed);
    optimizer = train::make_optimizer(detector, cfg.train);
  }
  train::ProgressFn progress;
  if (cfg.train.log_every > 0) {
    progress = [&](int step, const loss::LossBreakdown& b) {
      if ((step + 1) % cfg.train.log_every != 0) return;
      std::cerr << "step " << step + 1 << " total " << b.total.item<double>();
      for (const auto& [k, v] : b.raw) std::cerr << ' ' << k << '=' << v;
      std::cerr << std::endl;
    };
  }
  auto result = train::train(detector, clips, cfg.train, cfg.loss, state ? &*state : nullptr, optimizer.get(),
                             progress);
  save_checkpoint(out / "checkpoint.pt", detector, &result.state, optimizer.get());
  train::write_loss_history(out / "loss_history.txt", result.history);
  std::cout << "trained " << result.state.step << " steps; checkpoint " << (out / "checkpoint.pt").string() << "\n";
  if (do_eval) {
    const auto report = train::evaluate(detector, clips, cfg.train.eval_stride, cfg.eval.batch, cfg.eval.seed,
                                        eval_options(cfg));
    write_report_files(out, report);
  }
  return 0;
}

std::vector<train::ClipPredictions> read_prediction_dir(const fs::path& dir,
                                                        const std::vector<synth::VideoClip>& clips) {
  std::vector<train::ClipPredictions> out;
  for (const auto& clip : clips) {
    const auto path = dir / (clip.name + ".csv");
    if (!fs::exists(path)) throw DatasetError("missing prediction table " + path.string());
    out.push_back({clip.name, read_predictions(path)});
  }
  return out;
}

int run_eval(const Common& c, const std::string& data_dir, const std::string& checkpoint,
             const std::string& predictions, std::optional<double> fppi_threshold) {
  std::vector<std::string> extra;
  if (fppi_threshold) extra.push_back("eval.fppi_threshold=" + format_number(*fppi_threshold));
  const auto cfg = resolve(c, extra);
  if (checkpoint.empty() == predictions.empty()) {
    throw ConfigError("eval needs exactly one of --checkpoint or --predictions");
  }
  const auto clips = load_data(data_dir, cfg);
  metrics::MetricsReport report;
  if (!predictions.empty()) {
    const auto preds = read_prediction_dir(predictions, clips);
    report = train::score_predictions(clips, preds, cfg.train.eval_stride, eval_options(cfg));
  } else {
    auto loaded = load_checkpoint(checkpoint);
    report = train::evaluate(loaded.detector, clips, cfg.train.eval_stride, cfg.eval.batch, cfg.eval.seed,
                             eval_options(cfg));
  }
  write_report_files(c.output_dir, report);
  return 0;
}

int run_infer(const Common& c, const std::string& data_dir, const std::string& checkpoint) {
  const auto cfg = resolve(c);
  const auto clips = load_data(data_dir, cfg);
  auto loaded = load_checkpoint(checkpoint);
  const auto preds = train::infer(loaded.detector, clips, cfg.train.eval_stride, cfg.eval.batch, cfg.eval.seed);
  const fs::path dir = fs::path(c.output_dir) / "predictions";
  fs::create_directories(dir);
  for (const auto& p : preds) write_predictions(dir / (p.clip + ".csv"), p.frames);
  std::cout << "wrote predictions for " << preds.size() << " clips to " << dir.string() << "\n";
  return 0;
}

int run_visualize(const Common& c, const std::string& data_dir, const std::string& checkpoint,
                  const std::string& only_clip, int max_frames) {
  const auto cfg = resolve(c);
  const auto clips = load_data(data_dir, cfg);
  auto loaded = load_checkpoint(checkpoint);
  auto& det = loaded.detector;
  if (!det->config().use_oen) throw ConfigError("visualize-masks needs a model with the objectness branch");
  torch::NoGradGuard no_grad;
  det->eval();
  const fs::path dir(c.output_dir);
  int written = 0;
  for (const auto& clip : clips) {
    if (!only_clip.empty() && clip.name != only_clip) continue;
    std::mt19937_64 rng(cfg.eval.seed);
    for (int idx : train::eval_frame_indices(static_cast<int>(clip.size()), cfg.train.eval_stride)) {
      if (written >= max_frames) break;
      const synth::Image& frame = clip.frames[idx];
      const synth::Image* ptr = &frame;
      auto out = det->forward(model::frames_to_tensor(std::span<const synth::Image* const>(&ptr, 1)), rng);
      const int W = frame.width, H = frame.height;
      auto fused = out.pyramid.fused[0].norm(2, 0);
      auto dets = model::to_detections(out.decoder.final_logits()[0], out.decoder.final_boxes()[0], W, H);
      const std::vector<synth::Image> panels{frame, viz::heatmap(fused, W, H), viz::heatmap(out.score_map[0], W, H),
                                             viz::draw_boxes(frame, clip.annotations[idx].boxes, dets)};
      char stem[96];
      std::snprintf(stem, sizeof stem, "%s_%06d", clip.name.c_str(), idx);
      write_png(dir / (std::string(stem) + "_panel.png"), viz::hconcat(panels));
      write_png(dir / (std::string(stem) + "_mask.png"), viz::mask_image(out.masks[0].mask, W, H));
      ++written;
    }
  }
  if (written == 0) throw DatasetError("no frames selected for visualization");
  std::cout << "wrote " << written << " panels to " << dir.string() << "\n";
  return 0;
}

int run_ablate(const Common& c, const std::string& data_dir, bool skip_resolution) {
  const auto cfg = resolve(c);
  const fs::path out(c.output_dir);
  ablate::AblationData data;
  if (!data_dir.empty()) {
    data.train = read_dataset(data_dir);
  } else {
    data = ablate::make_ablation_data(cfg);
  }
  const auto rows = ablate::run_variants(cfg, data.train, data.eval, log_line);
  const auto table = ablate::format_table(rows, "variant");
  std::ofstream(out / "ablation.txt") << table;
  std::cout << table;
  if (!skip_resolution && !cfg.ablate.resolutions.empty()) {
    const auto sweep = ablate::run_resolution_sweep(cfg, log_line);
    const auto rtable = ablate::format_table(sweep, "resolution");
    std::ofstream(out / "resolution.txt") << rtable;
    std::cout << rtable;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // denormals slow late training steps by ~40% on CPU
  at::globalContext().setFlushDenormal(true);
  CLI::App app{"Coarse-to-fine tiny object detection on synthetic video"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("generate", "render a synthetic dataset");
  add_common(gen, common);
  std::optional<std::uint64_t> seed;
  std::optional<int> clips;
  gen->add_option("--seed", seed, "scene seed");
  gen->add_option("--clips", clips, "number of clips with objects");

  std::string data_dir, checkpoint, predictions, variant, resume, only_clip;
  bool do_eval = false, skip_resolution = false;
  std::optional<double> fppi_threshold;
  int max_frames = 8;

  auto* tr = app.add_subcommand("train", "train a detector");
  add_common(tr, common);
  tr->add_option("-d,--data", data_dir, "dataset directory (default: dataset.root)");
  tr->add_option("--variant", variant, "baseline|oen|query_init|full");
  tr->add_option("--resume", resume, "checkpoint to continue from");
  tr->add_flag("--eval", do_eval, "evaluate on the training data afterwards");

  auto* ev = app.add_subcommand("eval", "score a checkpoint or a prediction directory");
  add_common(ev, common);
  ev->add_option("-d,--data", data_dir, "dataset directory (default: dataset.root)");
  ev->add_option("--checkpoint", checkpoint, "model checkpoint");
  ev->add_option("--predictions", predictions, "directory of <clip>.csv prediction tables");
  ev->add_option("--fppi-threshold", fppi_threshold, "score threshold for FPPI (default: best-F1 threshold)");

  auto* inf = app.add_subcommand("infer", "write prediction tables");
  add_common(inf, common);
  inf->add_option("-d,--data", data_dir, "dataset directory (default: dataset.root)");
  inf->add_option("--checkpoint", checkpoint, "model checkpoint")->required();

  auto* vis = app.add_subcommand("visualize-masks", "frame | fused heatmap | objectness heatmap | boxes panels");
  add_common(vis, common);
  vis->add_option("-d,--data", data_dir, "dataset directory (default: dataset.root)");
  vis->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  vis->add_option("--clip", only_clip, "only this clip");
  vis->add_option("--max-frames", max_frames, "maximum number of panels")->check(CLI::PositiveNumber);

  auto* abl = app.add_subcommand("ablate", "component study and resolution sweep");
  add_common(abl, common);
  abl->add_option("-d,--data", data_dir, "dataset directory (default: generate from the config)");
  abl->add_flag("--skip-resolution", skip_resolution, "only run the component study");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return run_generate(common, seed, clips);
    if (tr->parsed()) return run_train(common, data_dir, variant, resume, do_eval);
    if (ev->parsed()) return run_eval(common, data_dir, checkpoint, predictions, fppi_threshold);
    if (inf->parsed()) return run_infer(common, data_dir, checkpoint);
    if (vis->parsed()) return run_visualize(common, data_dir, checkpoint, only_clip, max_frames);
    if (abl->parsed()) return run_ablate(common, data_dir, skip_resolution);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
