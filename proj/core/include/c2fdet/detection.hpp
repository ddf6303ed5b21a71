// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "c2fdet/box.hpp"

namespace c2f {

struct Detection {
  Box box;
  double score = 0.0;
  bool operator==(const Detection&) const = default;
};

/// Scored boxes for one frame of a clip.
struct FrameDetections {
  int frame_index = 0;
  std::vector<Detection> detections;
  bool operator==(const FrameDetections&) const = default;
};

}  // namespace c2f
