// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion ids
// (A1 ... A7) as arguments to run a subset.
#include <boost/math/distributions/students_t.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "c2fdet/ablate.hpp"
#include "c2fdet/checkpoint.hpp"
#include "c2fdet/config.hpp"
#include "c2fdet/dataset.hpp"
#include "c2fdet/hungarian.hpp"
#include "c2fdet/matchloss.hpp"
#include "c2fdet/metrics.hpp"
#include "c2fdet/oen.hpp"
#include "c2fdet/trainer.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace c2f;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string id;
  std::string title;
  double limit_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& s) { std::cerr << "  " << s << std::endl; }

// ---------------------------------------------------------------- A1

Outcome gradient_checks() {
  constexpr int kCoords = 200;
  std::mt19937_64 rng(101);
  torch::manual_seed(101);
  using Fn = std::function<torch::Tensor(const torch::Tensor&)>;
  std::vector<std::pair<std::string, std::pair<Fn, torch::Tensor>>> cases;

  // objectness losses on a 24x32 map with three instances
  GroundTruthMask gt;
  gt.instance_boxes = {{3, 4, 7, 7}, {15, 10, 17, 12}, {25, 17, 29, 20}};
  gt.mask = rasterize_boxes(gt.instance_boxes, 32, 24);
  const auto g = model::mask_tensor(gt.mask, torch::kFloat64);
  const auto p = torch::rand({24, 32}, torch::kFloat64) * 0.9 + 0.05;
  cases.push_back({"dice", {[&](const torch::Tensor& x) { return model::dice_loss(x, g); }, p}});
  cases.push_back({"instance_bce", {[&](const torch::Tensor& x) { return model::instance_bce_loss(x, gt); }, p}});
  cases.push_back({"oe", {[&](const torch::Tensor& x) { return model::oe_loss(x, gt, {}); }, p}});

  // query losses over 100 queries and 12 regions
  model::CoarseRegionSet regions;
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 12; ++i) {
    regions.centroids.push_back({u(rng), u(rng)});
    regions.extents.push_back({0.05, 0.05});
    regions.source_frame_indices.push_back(i % 4);
  }
  cases.push_back({"dec_query",
                   {[&](const torch::Tensor& x) { return model::dec_query_loss(x, regions); },
                    torch::rand({100, 2}, torch::kFloat64)}});
  cases.push_back({"dec_query_size",
                   {[&](const torch::Tensor& x) { return model::dec_query_size_loss(x, {100, 0.2}); },
                    torch::rand({100, 2}, torch::kFloat64) * 0.4 + 0.3}});

  // set losses over 100 predictions matched to 6 ground truths
  loss::MatchResult match;
  for (int k = 0; k < 6; ++k) match.pairs.emplace_back(k * 13, k);
  std::sort(match.pairs.begin(), match.pairs.end());
  const auto gt_boxes = torch::cat({torch::rand({6, 2}, torch::kFloat64) * 0.8 + 0.1,
                                    torch::rand({6, 2}, torch::kFloat64) * 0.1 + 0.02}, 1);
  cases.push_back({"focal",
                   {[&](const torch::Tensor& x) { return loss::focal_loss(x, match); },
                    torch::randn({100}, torch::kFloat64) * 2.0}});
  // boxes of the matched predictions; unmatched rows carry no gradient
  const auto pred_boxes = torch::cat({torch::rand({6, 2}, torch::kFloat64) * 0.8 + 0.1,
                                      torch::rand({6, 2}, torch::kFloat64) * 0.1 + 0.02}, 1);
  loss::MatchResult dense;
  for (int k = 0; k < 6; ++k) dense.pairs.emplace_back(k, 5 - k);
  cases.push_back({"reg",
                   {[&](const torch::Tensor& x) { return loss::reg_loss(x, gt_boxes, dense, {}); }, pred_boxes}});

  Outcome out{true, ""};
  for (const auto& [name, fc] : cases) {
    const auto r = oracle::finite_difference_check(fc.first, fc.second, kCoords, rng);
    const bool ok = r.checked == kCoords && r.pass_rate() >= 0.99;
    out.pass = out.pass && ok;
    out.detail += fmt("%s %d/%d%s ", name.c_str(), r.passed, r.checked, ok ? "" : "!");
  }
  return out;
}

// ---------------------------------------------------------------- A2

std::vector<metrics::ImageEval> random_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0, 60);
  std::uniform_real_distribution<double> size(4, 16);
  std::uniform_real_distribution<double> score(0, 1);
  std::normal_distribution<double> jitter(0, 2.0);
  const int images = 1 + static_cast<int>(rng() % 4);
  const int total_gts = 1 + static_cast<int>(rng() % 6);
  const int total_dets = static_cast<int>(rng() % 21);
  std::vector<metrics::ImageEval> out(images);
  for (int k = 0; k < total_gts; ++k) {
    const double x = pos(rng), y = pos(rng);
    out[rng() % images].gts.push_back({x, y, x + size(rng), y + size(rng)});
  }
  const bool coarse_scores = rng() % 2;
  for (int k = 0; k < total_dets; ++k) {
    auto& img = out[rng() % images];
    Box b;
    if (!img.gts.empty() && rng() % 3 != 0) {
      const auto& t = img.gts[rng() % img.gts.size()];
      b = {t.x1 + jitter(rng), t.y1 + jitter(rng), t.x2 + jitter(rng), t.y2 + jitter(rng)};
      if (b.x2 <= b.x1 + 0.5) b.x2 = b.x1 + 1;
      if (b.y2 <= b.y1 + 0.5) b.y2 = b.y1 + 1;
    } else {
      const double x = pos(rng), y = pos(rng);
      b = {x, y, x + size(rng), y + size(rng)};
    }
    // coarse scores exercise tied thresholds
    const double s = coarse_scores ? std::round(score(rng) * 5) / 5 : score(rng);
    img.detections.push_back({b, s});
  }
  return out;
}

Outcome metrics_and_matching() {
  std::mt19937_64 rng(202);
  int metric_fail = 0;
  double worst = 0;
  for (int t = 0; t < 500; ++t) {
    const auto inst = random_instance(rng);
    const auto r = metrics::evaluate(inst);
    const auto o = oracle::threshold_sweep(inst, 0.5);
    const double e = std::max(std::abs(r.ap50 - o.ap11), std::abs(r.f1 - o.best_f1));
    worst = std::max(worst, e);
    metric_fail += e > 1e-9;
  }

  int assign_fail = 0, instances = 0;
  std::uniform_real_distribution<double> u(0, 1);
  torch::manual_seed(203);
  for (int rows = 1; rows <= 6; ++rows) {
    for (int cols = 0; cols <= 6; ++cols) {
      for (int t = 0; t < 20; ++t, ++instances) {
        // detection-shaped costs from the matcher
        const auto logits = torch::randn({rows}, torch::kFloat64);
        const auto boxes = torch::cat({torch::rand({rows, 2}, torch::kFloat64), torch::rand({rows, 2}, torch::kFloat64) * 0.2 + 0.01}, 1);
        const auto gts = torch::cat({torch::rand({cols, 2}, torch::kFloat64), torch::rand({cols, 2}, torch::kFloat64) * 0.2 + 0.01}, 1);
        const auto m = loss::hungarian_match(logits, boxes, gts, {});
        const auto cost = loss::match_cost(logits, boxes, gts, {}).contiguous();
        std::vector<double> flat(cost.data_ptr<double>(), cost.data_ptr<double>() + cost.numel());
        const double want = cols == 0 ? 0.0 : oracle::brute_force_assignment(flat, rows, cols);
        assign_fail += std::abs(loss::assignment_cost(cost, m) - want) > 1e-9 ||
                       static_cast<int>(m.pairs.size()) != std::min(rows, cols);
        // plain random matrices, including ties
        if (cols == 0) continue;
        std::vector<double> raw(static_cast<std::size_t>(rows) * cols);
        for (auto& c : raw) c = t % 4 == 0 ? std::round(u(rng) * 3) : u(rng);
        const auto a = solve_assignment(raw, rows, cols);
        double got = 0;
        for (int r = 0; r < rows; ++r) got += a[r] >= 0 ? raw[r * cols + a[r]] : 0.0;
        assign_fail += std::abs(got - oracle::brute_force_assignment(raw, rows, cols)) > 1e-9;
      }
    }
  }
  return {metric_fail == 0 && assign_fail == 0,
          fmt("metrics mismatches %d/500 (worst %.2e), assignment mismatches %d over %d shapes-instances",
              metric_fail, worst, assign_fail, instances)};
}

// ---------------------------------------------------------------- A3

constexpr std::uint64_t kOverfitSeed = 3;

config::ExperimentConfig overfit_config() {
  config::ExperimentConfig c;
  c.scene.frame_width = 256;
  c.scene.frame_height = 192;
  c.scene.clip_length = 16;
  c.scene.num_objects = 2;
  c.scene.rng_seed = kOverfitSeed;
  c.train.max_steps = 2000;
  c.train.learning_rate = 3e-4;
  c.train.lr_milestones = {1500, 1850};
  c.train.augment_prob = 0.0;  // memorizing one clip, nothing to generalize to
  c.train.eval_stride = 4;
  c.train.seed = 0;
  c.train.log_every = 250;
  return c;
}

Outcome overfit_one_clip() {
  const auto cfg = overfit_config();
  const std::vector<synth::VideoClip> clips = {synth::generate_clip(cfg.scene, "overfit")};
  auto detector = model::make_detector(cfg.model, cfg.train.seed);
  train::ProgressFn log = [&](int step, const loss::LossBreakdown& b) {
    if ((step + 1) % cfg.train.log_every == 0) progress(fmt("A3 step %d loss %.4f", step + 1, b.total.item<double>()));
  };
  train::train(detector, clips, cfg.train, cfg.loss, nullptr, nullptr, log);
  const auto report = train::evaluate(detector, clips, cfg.train.eval_stride, cfg.eval.batch, cfg.eval.seed);
  return {cfg.train.max_steps <= 2000 && report.ap50 >= 0.9,
          fmt("AP@50 %.4f after %d steps (f1 %.4f, %d evaluated frames)", report.ap50, cfg.train.max_steps,
              report.f1, report.num_images)};
}

// ---------------------------------------------------------------- A4

config::ExperimentConfig ablation_config() {
  config::ExperimentConfig c;
  c.scene.clip_length = 16;
  c.scene.rng_seed = 4;
  c.dataset.num_clips = 30;
  c.train.max_steps = 2500;
  c.train.learning_rate = 3e-4;
  c.train.log_every = 500;
  c.ablate.holdout_clips = 0;
  return c;
}

Outcome ablation_ordering() {
  const auto cfg = ablation_config();
  const auto data = ablate::make_ablation_data(cfg);
  const auto rows = ablate::run_variants(cfg, data.train, data.eval, progress);
  std::cerr << ablate::format_table(rows, "variant");
  std::map<std::string, double> f1;
  for (const auto& r : rows) f1[r.label] = r.report.f1;
  const bool ordered = f1["baseline"] <= f1["oen"] && f1["oen"] <= f1["query_init"] && f1["query_init"] <= f1["full"];
  const bool margin = f1["full"] >= f1["baseline"] + 0.03;
  return {ordered && margin, fmt("f1 baseline %.4f, oen %.4f, query_init %.4f, full %.4f", f1["baseline"], f1["oen"],
                                 f1["query_init"], f1["full"])};
}

// ---------------------------------------------------------------- A5

/// Mean over frames and queries of the distance from a query centre to the
/// nearest ground-truth centre, in normalized coordinates.
double mean_nearest_gt(const torch::Tensor& anchors, const std::vector<synth::GroundTruthAnnotation>& anns,
                       FrameShape shape) {
  double total = 0;
  int n = 0;
  auto a = anchors.to(torch::kFloat64).contiguous();
  for (std::size_t f = 0; f < anns.size(); ++f) {
    if (anns[f].boxes.empty()) continue;
    const auto frame = a[static_cast<int64_t>(f)];
    const auto acc = frame.accessor<double, 2>();
    for (int64_t q = 0; q < a.size(1); ++q) {
      double best = 1e9;
      for (const auto& b : anns[f].boxes) {
        best = std::min(best, std::hypot(acc[q][0] - b.cx() / shape.width, acc[q][1] - b.cy() / shape.height));
      }
      total += best;
      ++n;
    }
  }
  return total / n;
}

Outcome search_space_reduction() {
  constexpr int kClips = 30;
  constexpr int kBatch = 4;
  synth::SceneConfig scene;
  scene.rng_seed = 5;
  scene.clip_length = kBatch;
  const auto clips = synth::generate_clips(scene, kClips);
  auto m = model::ModelConfig{};
  auto detector = model::make_detector(m, 0);
  detector->eval();
  torch::NoGradGuard no_grad;
  std::mt19937_64 rng(505);
  const int stride = m.backbone.patch_size * 2;
  std::vector<double> diff;
  double sum_init = 0, sum_rand = 0;
  for (const auto& clip : clips) {
    const FrameShape shape = clip.shape();
    std::vector<synth::Image> frames(clip.frames.begin(), clip.frames.begin() + kBatch);
    std::vector<synth::GroundTruthAnnotation> anns(clip.annotations.begin(), clip.annotations.begin() + kBatch);
    std::vector<BinaryMask> masks;
    for (const auto& a : anns) masks.push_back(synth::gt_mask_at(a, shape, shape.width / stride, shape.height / stride).mask);
    const auto out = detector->forward(model::frames_to_tensor(frames), rng, &masks);
    const double d_init = mean_nearest_gt(out.anchors, anns, shape);
    const auto random = model::anchors_to_tensor(model::random_queries(m.budget(), rng));
    const double d_rand = mean_nearest_gt(random.unsqueeze(0).expand({kBatch, -1, -1}), anns, shape);
    sum_init += d_init;
    sum_rand += d_rand;
    diff.push_back(d_rand - d_init);
  }
  const double n = static_cast<double>(diff.size());
  double mean = 0, var = 0;
  for (double d : diff) mean += d / n;
  for (double d : diff) var += (d - mean) * (d - mean) / (n - 1);
  const double t = mean / std::sqrt(var / n);
  boost::math::students_t dist(n - 1);
  const double p = boost::math::cdf(boost::math::complement(dist, t));  // one-sided: random > init
  return {mean > 0 && p < 0.01, fmt("mean distance init %.4f vs random %.4f over %d clips, t=%.2f, p=%.2e",
                                    sum_init / n, sum_rand / n, kClips, t, p)};
}

// ---------------------------------------------------------------- A6

bool same_weights(model::Detector& a, model::Detector& b) {
  const auto wa = named_weights(*a);
  const auto wb = named_weights(*b);
  if (wa.size() != wb.size()) return false;
  for (std::size_t i = 0; i < wa.size(); ++i) {
    if (wa[i].first != wb[i].first || !torch::equal(wa[i].second, wb[i].second)) return false;
  }
  return true;
}

Outcome reproducibility() {
  std::vector<std::string> failed;
  synth::SceneConfig scene;
  scene.clip_length = 8;
  scene.rng_seed = 606;
  const auto a = synth::generate_clips(scene, 3, 1);
  const auto b = synth::generate_clips(scene, 3, 1);
  if (a != b) failed.push_back("generation");

  const auto root = fs::temp_directory_path() / "c2fdet_acceptance_a6";
  fs::remove_all(root);
  write_dataset(a, root / "data");
  if (read_dataset(root / "data") != a) failed.push_back("dataset round trip");

  train::TrainConfig tc;
  tc.max_steps = 5;
  tc.seed = 7;
  model::ModelConfig mc;
  auto d1 = model::make_detector(mc, 7);
  auto d2 = model::make_detector(mc, 7);
  const auto h1 = train::train(d1, a, tc, {});
  const auto h2 = train::train(d2, a, tc, {});
  bool same_history = h1.history.size() == h2.history.size();
  for (std::size_t i = 0; same_history && i < h1.history.size(); ++i) {
    same_history = h1.history[i].value == h2.history[i].value;
  }
  if (!same_history || !same_weights(d1, d2)) failed.push_back("seeded training");

  const auto before = train::evaluate(d1, a, 4, 4, 0);
  const auto preds_before = train::infer(d1, a, 4, 4, 0);
  save_checkpoint(root / "ckpt.pt", d1);
  auto loaded = load_checkpoint(root / "ckpt.pt");
  const auto after = train::evaluate(loaded.detector, a, 4, 4, 0);
  const auto preds_after = train::infer(loaded.detector, a, 4, 4, 0);
  bool same_preds = preds_before.size() == preds_after.size();
  for (std::size_t i = 0; same_preds && i < preds_before.size(); ++i) {
    same_preds = preds_before[i].frames == preds_after[i].frames;
  }
  if (!(before == after) || !same_preds || !same_weights(d1, loaded.detector)) failed.push_back("checkpoint eval");
  fs::remove_all(root);

  std::string detail = "generation, dataset round trip, seeded training, checkpoint eval";
  if (!failed.empty()) {
    detail = "differs:";
    for (const auto& f : failed) detail += " " + f + ";";
  }
  return {failed.empty(), detail};
}

// ---------------------------------------------------------------- A7

Outcome mask_consistency() {
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> u(0, 1);
  int score_fail = 0, union_fail = 0;
  for (int t = 0; t < 1000; ++t) {
    const int h = 1 + static_cast<int>(rng() % 24), w = 1 + static_cast<int>(rng() % 32);
    const double thr = t % 10 == 0 ? std::round(u(rng) * 4) / 4 : u(rng);
    auto scores = torch::rand({h, w}, torch::kFloat64);
    if (t % 7 == 0) scores = (scores * 4).round() / 4;  // values equal to the threshold
    const auto m = model::threshold_scores(scores, thr);
    const auto acc = scores.accessor<double, 2>();
    bool ok = m.mask.width == w && m.mask.height == h;
    for (int y = 0; ok && y < h; ++y) {
      for (int x = 0; ok && x < w; ++x) ok = m.mask.at(x, y) == (acc[y][x] > thr ? 1 : 0);
    }
    score_fail += !ok;
  }
  for (int t = 0; t < 1000; ++t) {
    const int W = 8 + static_cast<int>(rng() % 120), H = 8 + static_cast<int>(rng() % 90);
    synth::GroundTruthAnnotation ann;
    const int n = static_cast<int>(rng() % 7);
    for (int k = 0; k < n; ++k) {
      const int x1 = static_cast<int>(rng() % (W - 1)), y1 = static_cast<int>(rng() % (H - 1));
      const int x2 = x1 + 1 + static_cast<int>(rng() % (W - x1)), y2 = y1 + 1 + static_cast<int>(rng() % (H - y1));
      ann.boxes.push_back({double(x1), double(y1), double(std::min(x2, W)), double(std::min(y2, H))});
      ann.object_ids.push_back(k);
    }
    const auto mask = synth::gt_mask_from_boxes(ann, {W, H}).mask;
    union_fail += mask.sum() != static_cast<long>(oracle::union_area(ann.boxes));
  }
  return {score_fail == 0 && union_fail == 0,
          fmt("score/mask mismatches %d/1000, mask/union mismatches %d/1000", score_fail, union_fail)};
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  at::globalContext().setFlushDenormal(true);
  const std::vector<Criterion> all = {
      {"A1", "loss gradients match finite differences", 120, gradient_checks},
      {"A2", "metrics and matching equal brute force", 60, metrics_and_matching},
      {"A3", "overfit one clip to AP@50 >= 0.9", 1800, overfit_one_clip},
      {"A4", "component study ordering", 4 * 3600, ablation_ordering},
      {"A5", "mask-primed queries start nearer the objects", 60, search_space_reduction},
      {"A6", "bit reproducibility", 600, reproducibility},
      {"A7", "mask consistency", 120, mask_consistency},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  bool all_pass = true;
  for (const auto& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    all_pass = all_pass && pass;
    std::cout << c.id << ' ' << (pass ? "PASS" : "FAIL") << " [" << c.title << "] " << o.detail
              << fmt(" (%.1f s%s)", secs, in_time ? "" : ", over time limit") << std::endl;
  }
  return all_pass ? 0 : 1;
}
