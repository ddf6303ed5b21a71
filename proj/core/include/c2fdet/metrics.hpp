// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "c2fdet/detection.hpp"

namespace c2f::metrics {

/// Detections and ground truth for one evaluated image.
struct ImageEval {
  std::vector<Detection> detections;
  std::vector<Box> gts;
};

struct DetectionLabel {
  int image = 0;
  int detection = 0;  ///< index into ImageEval::detections
  double score = 0.0;
  bool true_positive = false;
  int gt = -1;  ///< matched ground truth, -1 for false positives
};

/// Greedy matching by descending score. A detection is a true positive when
/// its best IoU against the still-unmatched ground truth of its image reaches
/// `iou_threshold` (ties go to the lower gt index). Output is in processing
/// order; ties in score are broken by image, then box coordinates, so the
/// result does not depend on input order.
std::vector<DetectionLabel> match_detections(std::span<const ImageEval> images,
                                             double iou_threshold = 0.5);

struct PrPoint {
  double threshold = 0.0;  ///< detections with score >= threshold are kept
  double recall = 0.0;
  double precision = 0.0;               ///< raw precision at this threshold
  double interpolated_precision = 0.0;  ///< max precision at any recall >= this one
};

struct PrCurve {
  std::vector<PrPoint> points;  ///< descending threshold, non-decreasing recall
  int num_gts = 0;
};

struct OperatingPoint {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double threshold = std::numeric_limits<double>::infinity();
};

struct PrSummary {
  PrCurve curve;
  OperatingPoint best;
};

/// Sweeps every distinct score as a threshold. Precision is interpolated as a
/// running maximum from the high-recall end; best F1 is taken over the curve
/// points (highest threshold wins ties). Zero detections give P = R = F1 = 0.
/// Throws std::invalid_argument when num_gts < 1.
PrSummary pr_curve_and_best_f1(std::span<const DetectionLabel> labels, int num_gts);

/// Mean interpolated precision at recall 0.0, 0.1, ..., 1.0 (0 where the
/// recall is never reached).
double ap50(const PrCurve& curve);

/// Area under the interpolated curve (all-point interpolation).
double ap_all_point(const PrCurve& curve);

/// False positives with score >= threshold, per image.
double fppi(std::span<const DetectionLabel> labels, int num_images, double score_threshold);

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double ap50 = 0.0;
  double ap_all_point = 0.0;
  double fppi = 0.0;
  double operating_threshold = std::numeric_limits<double>::infinity();
  int num_images = 0;
  int num_gts = 0;
  int num_detections = 0;
  std::vector<std::pair<double, double>> pr_curve;  ///< (recall, interpolated precision)

  bool operator==(const MetricsReport&) const = default;
};

struct EvalOptions {
  double iou_threshold = 0.5;
  /// Operating point for FPPI; defaults to the best-F1 threshold.
  std::optional<double> fppi_threshold;
};

MetricsReport evaluate(std::span<const ImageEval> images, const EvalOptions& options = {});

/// key=value lines followed by a pr_curve block.
std::string format_report(const MetricsReport& report);
void write_report(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport parse_report(const std::string& text);

}  // namespace c2f::metrics
