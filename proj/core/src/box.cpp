// SPDX-License-Identifier: Apache-2.0
#include "c2fdet/box.hpp"

#include <algorithm>
#include <sstream>

namespace c2f {

double Box::area() const {
  return std::max(0.0, width()) * std::max(0.0, height());
}

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return inter / std::max(uni, kBoxEps);
}

double giou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = std::max(a.area() + b.area() - inter, kBoxEps);
  const Box hull{std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
                 std::max(a.y2, b.y2)};
  const double enclosing = std::max(hull.area(), kBoxEps);
  return inter / uni - (enclosing - uni) / enclosing;
}

Box scale_box(const Box& b, double sx, double sy) {
  return {b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy};
}

std::string to_string(const Box& b) {
  std::ostringstream os;
  os << "(" << b.x1 << ", " << b.y1 << ", " << b.x2 << ", " << b.y2 << ")";
  return os.str();
}

}  // namespace c2f
