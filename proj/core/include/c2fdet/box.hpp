// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace c2f {

/// Axis-aligned box in corner form. Units depend on context (pixels for
/// annotations and prediction tables, [0,1] for normalized model outputs).
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  [[nodiscard]] double width() const { return x2 - x1; }
  [[nodiscard]] double height() const { return y2 - y1; }
  [[nodiscard]] double area() const;
  [[nodiscard]] double cx() const { return 0.5 * (x1 + x2); }
  [[nodiscard]] double cy() const { return 0.5 * (y1 + y2); }

  static Box from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  bool operator==(const Box&) const = default;
};

/// Degenerate (zero-area) boxes are clamped by this epsilon in IoU/GIoU.
inline constexpr double kBoxEps = 1e-9;

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);
/// Generalized IoU in (-1, 1]; symmetric, giou(a, a) == 1.
double giou(const Box& a, const Box& b);

Box scale_box(const Box& b, double sx, double sy);

std::string to_string(const Box& b);

struct FrameShape {
  int width = 0;
  int height = 0;
  bool operator==(const FrameShape&) const = default;
};

/// Base for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace c2f
