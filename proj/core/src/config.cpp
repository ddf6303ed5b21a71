// SPDX-License-Identifier: Apache-2.0
#include "c2fdet/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "c2fdet/box.hpp"

namespace c2f::config {

using json = nlohmann::json;

void DatasetConfig::validate() const {
  if (root.empty()) throw ConfigError("dataset.root must not be empty");
  if (num_clips < 0 || empty_clips < 0) throw ConfigError("dataset clip counts must be >= 0");
  if (num_clips + empty_clips < 1) throw ConfigError("dataset must have at least one clip");
}

void EvalConfig::validate() const {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw ConfigError("eval.iou_threshold must lie in (0, 1]");
  if (batch < 1) throw ConfigError("eval.batch must be >= 1");
}

void AblateConfig::validate() const {
  for (const auto& v : variants) model::variant_from_string(v);
  model::variant_from_string(resolution_variant);
  for (int r : resolutions) {
    if (r < 32) throw ConfigError("ablate.resolutions entries must be >= 32");
  }
  if (resolution_max_steps < -1) throw ConfigError("ablate.resolution_max_steps must be >= -1");
  if (holdout_clips < 0) throw ConfigError("ablate.holdout_clips must be >= 0");
}

void ExperimentConfig::validate() const {
  scene.validate();
  dataset.validate();
  model.validate();
  model.backbone.check_frame(scene.frame_height, scene.frame_width);
  loss.validate();
  train.validate();
  eval.validate();
  ablate.validate();
}

namespace {

using Setter = std::function<void(const json&, const std::string&)>;

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

template <typename V>
Setter field(V& target) {
  return [&target](const json& j, const std::string& key) {
    try {
      target = j.get<V>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + key + "' has the wrong type (got " + j.dump() + ")");
    }
  };
}

template <typename E>
Setter enum_field(E& target, std::vector<std::pair<std::string, E>> names) {
  return [&target, names = std::move(names)](const json& j, const std::string& key) {
    if (j.is_string()) {
      for (const auto& [n, v] : names) {
        if (n == j.get<std::string>()) {
          target = v;
          return;
        }
      }
    }
    std::string allowed;
    for (const auto& [n, v] : names) allowed += (allowed.empty() ? "" : "|") + n;
    throw ConfigError("config key '" + key + "' must be one of " + allowed + " (got " + j.dump() + ")");
  };
}

void read_object(const json& j, const std::string& prefix, const std::map<std::string, Setter>& fields) {
  if (!j.is_object()) throw ConfigError("config key '" + prefix + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key '" + join(prefix, key) + "'");
    it->second(value, join(prefix, key));
  }
}

Setter object(std::function<void(const json&, const std::string&)> reader) { return reader; }

const std::vector<std::pair<std::string, model::DiceForm>> kDiceForms{
    {"standard", model::DiceForm::Standard}, {"literal", model::DiceForm::Literal}};
const std::vector<std::pair<std::string, model::BceForm>> kBceForms{
    {"instance", model::BceForm::InstanceAware}, {"per_pixel", model::BceForm::PerPixel}};
const std::vector<std::pair<std::string, model::QuerySizeForm>> kSizeForms{
    {"hinge", model::QuerySizeForm::Hinge}, {"literal", model::QuerySizeForm::Literal}};

template <typename E>
std::string enum_name(E v, const std::vector<std::pair<std::string, E>>& names) {
  for (const auto& [n, e] : names) {
    if (e == v) return n;
  }
  return names.front().first;
}

void read_model(const json& j, const std::string& prefix, model::ModelConfig& m) {
  read_object(
      j, prefix,
      {{"backbone", object([&m](const json& b, const std::string& p) {
          if (b.is_object() && b.contains("preset")) {
            std::string name;
            field(name)(b.at("preset"), p + ".preset");
            m.backbone = model::BackboneConfig::preset(name);
          }
          auto& c = m.backbone;
          std::string ignored;
          read_object(b, p,
                      {{"preset", field(ignored)},
                       {"embed_dim", field(c.embed_dim)},
                       {"depths", field(c.depths)},
                       {"num_heads", field(c.num_heads)},
                       {"window_size", field(c.window_size)},
                       {"num_stages", field(c.num_stages)},
                       {"patch_size", field(c.patch_size)},
                       {"mlp_ratio", field(c.mlp_ratio)},
                       {"fpn_dim", field(c.fpn_dim)}});
        })},
       {"oen", object([&m](const json& o, const std::string& p) {
          read_object(o, p, {{"width", field(m.oen.width)}, {"out_channels", field(m.oen.out_channels)}});
        })},
       {"decoder", object([&m](const json& d, const std::string& p) {
          auto& c = m.decoder;
          read_object(d, p,
                      {{"num_layers", field(c.num_layers)},
                       {"num_heads", field(c.num_heads)},
                       {"model_width", field(c.model_width)},
                       {"ffn_dim", field(c.ffn_dim)},
                       {"num_queries", field(c.num_queries)}});
        })},
       {"a_max", field(m.a_max)},
       {"mask_threshold", field(m.mask_threshold)},
       {"query_jitter", field(m.query_jitter)},
       {"use_oen", field(m.use_oen)},
       {"query_init", field(m.query_init)},
       {"query_losses", field(m.query_losses)}});
}

json model_to_json(const model::ModelConfig& m) {
  const auto& b = m.backbone;
  const auto& d = m.decoder;
  return {{"backbone",
           {{"embed_dim", b.embed_dim},
            {"depths", b.depths},
            {"num_heads", b.num_heads},
            {"window_size", b.window_size},
            {"num_stages", b.num_stages},
            {"patch_size", b.patch_size},
            {"mlp_ratio", b.mlp_ratio},
            {"fpn_dim", b.fpn_dim}}},
          {"oen", {{"width", m.oen.width}, {"out_channels", m.oen.out_channels}}},
          {"decoder",
           {{"num_layers", d.num_layers},
            {"num_heads", d.num_heads},
            {"model_width", d.model_width},
            {"ffn_dim", d.ffn_dim},
            {"num_queries", d.num_queries}}},
          {"a_max", m.a_max},
          {"mask_threshold", m.mask_threshold},
          {"query_jitter", m.query_jitter},
          {"use_oen", m.use_oen},
          {"query_init", m.query_init},
          {"query_losses", m.query_losses}};
}

void read_config(const json& j, ExperimentConfig& c) {
  read_object(
      j, "",
      {{"scene", object([&c](const json& s, const std::string& p) {
          auto& sc = c.scene;
          read_object(s, p,
                      {{"frame_width", field(sc.frame_width)},
                       {"frame_height", field(sc.frame_height)},
                       {"clip_length", field(sc.clip_length)},
                       {"num_objects", field(sc.num_objects)},
                       {"object_area_fraction_range", field(sc.object_area_fraction_range)},
                       {"motion_blur_strength", field(sc.motion_blur_strength)},
                       {"noise_std", field(sc.noise_std)},
                       {"background_kind", enum_field(sc.background_kind,
                                                      {{"sky", synth::BackgroundKind::Sky},
                                                       {"clouds", synth::BackgroundKind::Clouds},
                                                       {"trees", synth::BackgroundKind::Trees},
                                                       {"mixed", synth::BackgroundKind::Mixed}})},
                       {"rng_seed", field(sc.rng_seed)}});
        })},
       {"dataset", object([&c](const json& s, const std::string& p) {
          read_object(s, p,
                      {{"root", field(c.dataset.root)},
                       {"num_clips", field(c.dataset.num_clips)},
                       {"empty_clips", field(c.dataset.empty_clips)}});
        })},
       {"model", object([&c](const json& s, const std::string& p) { read_model(s, p, c.model); })},
       {"loss", object([&c](const json& s, const std::string& p) {
          auto& l = c.loss;
          read_object(s, p,
                      {{"w_cls", field(l.weights.w_cls)},
                       {"w_l1", field(l.weights.w_l1)},
                       {"w_giou", field(l.weights.w_giou)},
                       {"w_oe", field(l.weights.w_oe)},
                       {"w_query", field(l.weights.w_query)},
                       {"w_query_size", field(l.weights.w_query_size)},
                       {"focal_gamma", field(l.focal.gamma)},
                       {"focal_alpha", field(l.focal.alpha)},
                       {"oe_alpha", field(l.oe_alpha)},
                       {"oe_beta", field(l.oe_beta)},
                       {"dice_form", enum_field(l.dice_form, kDiceForms)},
                       {"bce_form", enum_field(l.bce_form, kBceForms)},
                       {"query_size_form", enum_field(l.query_size_form, kSizeForms)},
                       {"aux_loss", field(l.aux_loss)}});
        })},
       {"train", object([&c](const json& s, const std::string& p) {
          auto& t = c.train;
          read_object(s, p,
                      {{"learning_rate", field(t.learning_rate)},
                       {"weight_decay", field(t.weight_decay)},
                       {"lr_milestones", field(t.lr_milestones)},
                       {"lr_decay", field(t.lr_decay)},
                       {"clip_length", field(t.clip_length)},
                       {"max_steps", field(t.max_steps)},
                       {"augment_prob", field(t.augment_prob)},
                       {"eval_stride", field(t.eval_stride)},
                       {"seed", field(t.seed)},
                       {"grad_clip", field(t.grad_clip)},
                       {"num_threads", field(t.num_threads)},
                       {"log_every", field(t.log_every)}});
        })},
       {"eval", object([&c](const json& s, const std::string& p) {
          auto& e = c.eval;
          read_object(s, p,
                      {{"iou_threshold", field(e.iou_threshold)},
                       {"fppi_threshold",
                        [&e](const json& v, const std::string& key) {
                          if (v.is_null()) {
                            e.fppi_threshold.reset();
                          } else {
                            double t = 0;
                            field(t)(v, key);
                            e.fppi_threshold = t;
                          }
                        }},
                       {"batch", field(e.batch)},
                       {"seed", field(e.seed)}});
        })},
       {"ablate", object([&c](const json& s, const std::string& p) {
          auto& a = c.ablate;
          read_object(s, p,
                      {{"variants", field(a.variants)},
                       {"resolutions", field(a.resolutions)},
                       {"resolution_variant", field(a.resolution_variant)},
                       {"resolution_max_steps", field(a.resolution_max_steps)},
                       {"holdout_clips", field(a.holdout_clips)}});
        })}});
}

json config_to_json(const ExperimentConfig& c) {
  const auto& s = c.scene;
  const auto& l = c.loss;
  const auto& t = c.train;
  const auto& a = c.ablate;
  return {
      {"scene",
       {{"frame_width", s.frame_width},
        {"frame_height", s.frame_height},
        {"clip_length", s.clip_length},
        {"num_objects", s.num_objects},
        {"object_area_fraction_range", s.object_area_fraction_range},
        {"motion_blur_strength", s.motion_blur_strength},
        {"noise_std", s.noise_std},
        {"background_kind", synth::to_string(s.background_kind)},
        {"rng_seed", s.rng_seed}}},
      {"dataset", {{"root", c.dataset.root}, {"num_clips", c.dataset.num_clips}, {"empty_clips", c.dataset.empty_clips}}},
      {"model", model_to_json(c.model)},
      {"loss",
       {{"w_cls", l.weights.w_cls},
        {"w_l1", l.weights.w_l1},
        {"w_giou", l.weights.w_giou},
        {"w_oe", l.weights.w_oe},
        {"w_query", l.weights.w_query},
        {"w_query_size", l.weights.w_query_size},
        {"focal_gamma", l.focal.gamma},
        {"focal_alpha", l.focal.alpha},
        {"oe_alpha", l.oe_alpha},
        {"oe_beta", l.oe_beta},
        {"dice_form", enum_name(l.dice_form, kDiceForms)},
        {"bce_form", enum_name(l.bce_form, kBceForms)},
        {"query_size_form", enum_name(l.query_size_form, kSizeForms)},
        {"aux_loss", l.aux_loss}}},
      {"train",
       {{"learning_rate", t.learning_rate},
        {"weight_decay", t.weight_decay},
        {"lr_milestones", t.lr_milestones},
        {"lr_decay", t.lr_decay},
        {"clip_length", t.clip_length},
        {"max_steps", t.max_steps},
        {"augment_prob", t.augment_prob},
        {"eval_stride", t.eval_stride},
        {"seed", t.seed},
        {"grad_clip", t.grad_clip},
        {"num_threads", t.num_threads},
        {"log_every", t.log_every}}},
      {"eval",
       {{"iou_threshold", c.eval.iou_threshold},
        {"fppi_threshold", c.eval.fppi_threshold ? json(*c.eval.fppi_threshold) : json(nullptr)},
        {"batch", c.eval.batch},
        {"seed", c.eval.seed}}},
      {"ablate",
       {{"variants", a.variants},
        {"resolutions", a.resolutions},
        {"resolution_variant", a.resolution_variant},
        {"resolution_max_steps", a.resolution_max_steps},
        {"holdout_clips", a.holdout_clips}}},
  };
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  read_config(parse_json(text), c);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& config) { return config_to_json(config).dump(2) + "\n"; }

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  // build a one-key document so the strict reader names unknown keys
  json doc = value;
  std::vector<std::string> parts;
  std::stringstream ks(key);
  for (std::string part; std::getline(ks, part, '.');) parts.push_back(part);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("override key '" + key + "' has an empty component");
    doc = json{{*it, doc}};
  }
  ExperimentConfig updated = config;
  read_config(doc, updated);
  config = updated;
}

std::string dump_model_config(const model::ModelConfig& config) { return model_to_json(config).dump(); }

model::ModelConfig parse_model_config(const std::string& text) {
  model::ModelConfig m;
  read_model(parse_json(text), "model", m);
  m.validate();
  return m;
}

FrameShape resolution_shape(int longer_side, int multiple) {
  const double shorter = longer_side * 0.75;
  int h = static_cast<int>(std::lround(shorter / multiple)) * multiple;
  h = std::max(h, multiple);
  return {longer_side, h};
}

}  // namespace c2f::config
