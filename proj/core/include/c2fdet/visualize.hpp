// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "c2fdet/detection.hpp"
#include "c2fdet/mask.hpp"
#include "c2fdet/metrics.hpp"
#include "c2fdet/synthdata.hpp"

namespace c2f::viz {

/// Min-max normalized jet colormap of a [h, w] map, resized to width x height.
synth::Image heatmap(const torch::Tensor& map, int width, int height);

/// White-on-black rendering of a binary mask, resized to width x height.
synth::Image mask_image(const BinaryMask& mask, int width, int height);

/// Copy of `frame` with 1-px rectangles: gt in green, detections in red.
synth::Image draw_boxes(const synth::Image& frame, std::span<const Box> gts,
                        std::span<const Detection> detections, double min_score = 0.5);

/// Images of equal height placed left to right.
synth::Image hconcat(std::span<const synth::Image> panels);

/// Recall on x, interpolated precision on y.
synth::Image plot_pr_curve(const metrics::MetricsReport& report, int width = 480, int height = 360);

}  // namespace c2f::viz
