// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "c2fdet/box.hpp"
#include "c2fdet/mask.hpp"

namespace c2f::synth {

enum class BackgroundKind { Sky, Clouds, Trees, Mixed };

std::string to_string(BackgroundKind kind);
BackgroundKind background_from_string(const std::string& name);

struct SceneConfig {
  int frame_width = 256;
  int frame_height = 192;
  int clip_length = 16;
  int num_objects = 2;
  /// Fraction of the frame area covered by an object's box.
  std::pair<double, double> object_area_fraction_range{0.0005, 0.0008};
  double motion_blur_strength = 0.5;
  double noise_std = 3.0;
  BackgroundKind background_kind = BackgroundKind::Mixed;
  std::uint64_t rng_seed = 0;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

/// 8-bit interleaved RGB image.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t& at(int x, int y, int c) {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  [[nodiscard]] std::uint8_t at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  [[nodiscard]] FrameShape shape() const { return {width, height}; }

  bool operator==(const Image&) const = default;
};

struct GroundTruthAnnotation {
  int frame_index = 0;
  std::vector<Box> boxes;  ///< pixels, x1 < x2, y1 < y2, inside the frame
  std::vector<int> object_ids;

  bool operator==(const GroundTruthAnnotation&) const = default;
};

struct VideoClip {
  std::string name;
  std::vector<Image> frames;
  std::vector<GroundTruthAnnotation> annotations;  ///< one per frame, same order

  [[nodiscard]] std::size_t size() const { return frames.size(); }
  [[nodiscard]] FrameShape shape() const;

  bool operator==(const VideoClip&) const = default;
};

/// Throws DatasetError naming the frame index when an annotation violates its
/// invariants for the given frame shape.
void validate_annotation(const GroundTruthAnnotation& ann, FrameShape shape);

/// Renders a clip of tiny moving objects over a procedural background.
/// Equal configs (seed included) produce bit-identical clips.
VideoClip generate_clip(const SceneConfig& config, std::string name = "clip");

/// Seed of clip `index` in a dataset generated from `base_seed`.
std::uint64_t clip_seed(std::uint64_t base_seed, int index);

/// `num_clips` clips with objects followed by `empty_clips` clips without,
/// named clip_0000, clip_0001, ...; clip i uses clip_seed(config.rng_seed, i).
std::vector<VideoClip> generate_clips(const SceneConfig& config, int num_clips, int empty_clips = 0);

/// Per-object alpha coverage used while rendering; exposed for tests of the
/// tightness invariant. Entry [i] is the alpha map of object i for `frame`.
struct RenderedObjects {
  std::vector<std::vector<float>> alpha;  ///< each width*height, row-major
};
RenderedObjects render_object_alphas(const SceneConfig& config, int frame);

/// Full-resolution ground-truth mask: 1 inside any box, 0 elsewhere.
GroundTruthMask gt_mask_from_boxes(const GroundTruthAnnotation& ann, FrameShape frame_shape);

/// Ground-truth mask on a coarser grid (e.g. a stride-8 feature map). Boxes are
/// rescaled to mask cells; any cell the box overlaps is foreground.
GroundTruthMask gt_mask_at(const GroundTruthAnnotation& ann, FrameShape frame_shape,
                           int mask_width, int mask_height);

}  // namespace c2f::synth
