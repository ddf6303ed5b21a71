// SPDX-License-Identifier: Apache-2.0
#include "c2fdet/visualize.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

namespace c2f::viz {

namespace {

cv::Mat to_mat(const synth::Image& img) {
  cv::Mat m(img.height, img.width, CV_8UC3);
  std::copy(img.rgb.begin(), img.rgb.end(), m.data);
  return m;
}

synth::Image from_mat(const cv::Mat& m) {
  synth::Image img(m.cols, m.rows);
  cv::Mat cont = m.isContinuous() ? m : m.clone();
  std::copy(cont.data, cont.data + img.rgb.size(), img.rgb.begin());
  return img;
}

}  // namespace

synth::Image heatmap(const torch::Tensor& map, int width, int height) {
  auto m = map.detach().to(torch::kFloat32).contiguous().cpu();
  if (m.dim() != 2) throw ShapeError("heatmap expects a 2-D map");
  const float lo = m.min().item<float>();
  const float hi = m.max().item<float>();
  auto norm = hi > lo ? (m - lo) / (hi - lo) : torch::zeros_like(m);
  auto bytes = (norm * 255.0).round().clamp(0, 255).to(torch::kUInt8).contiguous();
  cv::Mat gray(static_cast<int>(m.size(0)), static_cast<int>(m.size(1)), CV_8UC1, bytes.data_ptr<std::uint8_t>());
  cv::Mat color, resized, rgb;
  cv::applyColorMap(gray, color, cv::COLORMAP_JET);
  cv::resize(color, resized, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
  cv::cvtColor(resized, rgb, cv::COLOR_BGR2RGB);
  return from_mat(rgb);
}

synth::Image mask_image(const BinaryMask& mask, int width, int height) {
  cv::Mat gray(mask.height, mask.width, CV_8UC1);
  for (int i = 0; i < mask.width * mask.height; ++i) gray.data[i] = mask.data[i] ? 255 : 0;
  cv::Mat resized, rgb;
  cv::resize(gray, resized, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
  cv::cvtColor(resized, rgb, cv::COLOR_GRAY2RGB);
  return from_mat(rgb);
}

synth::Image draw_boxes(const synth::Image& frame, std::span<const Box> gts,
                        std::span<const Detection> detections, double min_score) {
  cv::Mat m = to_mat(frame);
  auto rect = [&](const Box& b, const cv::Scalar& color) {
    cv::rectangle(m, cv::Point(static_cast<int>(std::floor(b.x1)), static_cast<int>(std::floor(b.y1))),
                  cv::Point(static_cast<int>(std::ceil(b.x2)) - 1, static_cast<int>(std::ceil(b.y2)) - 1), color, 1);
  };
  for (const auto& d : detections) {
    if (d.score >= min_score) rect(d.box, cv::Scalar(255, 0, 0));
  }
  for (const auto& b : gts) rect(b, cv::Scalar(0, 255, 0));
  return from_mat(m);
}

synth::Image hconcat(std::span<const synth::Image> panels) {
  if (panels.empty()) return {};
  std::vector<cv::Mat> mats;
  for (const auto& p : panels) {
    if (p.height != panels.front().height) throw ShapeError("panels differ in height");
    mats.push_back(to_mat(p));
  }
  cv::Mat out;
  cv::hconcat(mats, out);
  return from_mat(out);
}

synth::Image plot_pr_curve(const metrics::MetricsReport& report, int width, int height) {
  cv::Mat m(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int left = 50, right = 20, top = 20, bottom = 45;
  const int pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double r) { return left + static_cast<int>(std::lround(r * pw)); };
  auto py = [&](double p) { return top + static_cast<int>(std::lround((1.0 - p) * ph)); };
  const cv::Scalar grid(220, 220, 220), axis(0, 0, 0), curve(200, 30, 30);
  for (int i = 0; i <= 10; ++i) {
    const double v = i / 10.0;
    cv::line(m, {px(v), py(0)}, {px(v), py(1)}, grid, 1);
    cv::line(m, {px(0), py(v)}, {px(1), py(v)}, grid, 1);
    if (i % 2 == 0) {
      const std::string label = cv::format("%.1f", v);
      cv::putText(m, label, {px(v) - 10, py(0) + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.35, axis, 1);
      cv::putText(m, label, {left - 30, py(v) + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.35, axis, 1);
    }
  }
  cv::rectangle(m, {px(0), py(1)}, {px(1), py(0)}, axis, 1);
  cv::putText(m, "recall", {left + pw / 2 - 20, height - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1);
  cv::putText(m, "precision", {4, top - 6}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1);

  // step curve: precision holds until the next recall point
  double prev_r = 0.0, prev_p = report.pr_curve.empty() ? 0.0 : report.pr_curve.front().second;
  for (const auto& [r, p] : report.pr_curve) {
    cv::line(m, {px(prev_r), py(prev_p)}, {px(r), py(prev_p)}, curve, 2);
    cv::line(m, {px(r), py(prev_p)}, {px(r), py(p)}, curve, 2);
    prev_r = r;
    prev_p = p;
  }
  const std::string legend = cv::format("F1 %.3f  AP50 %.3f", report.f1, report.ap50);
  cv::putText(m, legend, {width - right - 170, top + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.45, curve, 1);
  cv::Mat rgb;
  cv::cvtColor(m, rgb, cv::COLOR_BGR2RGB);
  return from_mat(rgb);
}

}  // namespace c2f::viz
