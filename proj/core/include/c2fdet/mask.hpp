// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "c2fdet/box.hpp"

namespace c2f {

/// Row-major binary mask, one byte per cell holding 0 or 1.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] std::uint8_t at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  [[nodiscard]] long sum() const;

  bool operator==(const BinaryMask&) const = default;
};

/// Ground-truth objectness target: binary mask plus the instance boxes in
/// mask coordinates (cell units).
struct GroundTruthMask {
  BinaryMask mask;
  std::vector<Box> instance_boxes;
};

/// Marks every cell that overlaps one of `boxes` with positive area. Boxes are
/// given in cell units. For integer boxes this is exactly the set of cells
/// inside the box, so the mask sum equals the area of the union.
BinaryMask rasterize_boxes(std::span<const Box> boxes, int width, int height);

}  // namespace c2f
