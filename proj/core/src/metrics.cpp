// SPDX-License-Identifier: Apache-2.0
#include "c2fdet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "c2fdet/dataset.hpp"

namespace c2f::metrics {

std::vector<DetectionLabel> match_detections(std::span<const ImageEval> images,
                                             double iou_threshold) {
  std::vector<DetectionLabel> order;
  for (int i = 0; i < static_cast<int>(images.size()); ++i) {
    const auto& dets = images[i].detections;
    for (int d = 0; d < static_cast<int>(dets.size()); ++d) {
      order.push_back({i, d, dets[d].score, false, -1});
    }
  }
  std::sort(order.begin(), order.end(), [&](const DetectionLabel& a, const DetectionLabel& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    const auto& ba = images[a.image].detections[a.detection].box;
    const auto& bb = images[b.image].detections[b.detection].box;
    return std::tie(ba.x1, ba.y1, ba.x2, ba.y2, a.detection) <
           std::tie(bb.x1, bb.y1, bb.x2, bb.y2, b.detection);
  });

  std::vector<std::vector<bool>> taken(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) taken[i].assign(images[i].gts.size(), false);

  for (auto& label : order) {
    const auto& img = images[label.image];
    const auto& box = img.detections[label.detection].box;
    double best = -1.0;
    int best_gt = -1;
    for (int g = 0; g < static_cast<int>(img.gts.size()); ++g) {
      if (taken[label.image][g]) continue;
      const double v = iou(box, img.gts[g]);
      if (v > best) {
        best = v;
        best_gt = g;
      }
    }
    if (best_gt >= 0 && best >= iou_threshold) {
      label.true_positive = true;
      label.gt = best_gt;
      taken[label.image][best_gt] = true;
    }
  }
  return order;
}

PrSummary pr_curve_and_best_f1(std::span<const DetectionLabel> labels, int num_gts) {
  if (num_gts < 1) throw std::invalid_argument("recall is undefined without ground truth boxes");
  std::vector<DetectionLabel> sorted(labels.begin(), labels.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });

  PrSummary out;
  out.curve.num_gts = num_gts;
  auto& pts = out.curve.points;
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double thr = sorted[i].score;
    // all detections sharing a score enter together
    for (; i < sorted.size() && sorted[i].score == thr; ++i) {
      (sorted[i].true_positive ? tp : fp) += 1;
    }
    PrPoint p;
    p.threshold = thr;
    p.recall = static_cast<double>(tp) / num_gts;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    pts.push_back(p);
  }
  double running = 0.0;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    running = std::max(running, it->precision);
    it->interpolated_precision = running;
  }
  for (const auto& p : pts) {
    const double denom = p.interpolated_precision + p.recall;
    const double f1 = denom > 0 ? 2.0 * p.interpolated_precision * p.recall / denom : 0.0;
    if (f1 > out.best.f1) {
      out.best = {p.interpolated_precision, p.recall, f1, p.threshold};
    }
  }
  return out;
}

double ap50(const PrCurve& curve) {
  double sum = 0.0;
  for (int k = 0; k <= 10; ++k) {
    const double r = k / 10.0;
    double p = 0.0;
    for (const auto& pt : curve.points) {
      if (pt.recall >= r) p = std::max(p, pt.interpolated_precision);
    }
    sum += p;
  }
  return sum / 11.0;
}

double ap_all_point(const PrCurve& curve) {
  double area = 0.0, prev_recall = 0.0;
  for (const auto& pt : curve.points) {
    area += (pt.recall - prev_recall) * pt.interpolated_precision;
    prev_recall = pt.recall;
  }
  return area;
}

double fppi(std::span<const DetectionLabel> labels, int num_images, double score_threshold) {
  if (num_images < 1) throw std::invalid_argument("fppi needs at least one image");
  const auto fps = std::count_if(labels.begin(), labels.end(), [&](const DetectionLabel& l) {
    return !l.true_positive && l.score >= score_threshold;
  });
  return static_cast<double>(fps) / num_images;
}

MetricsReport evaluate(std::span<const ImageEval> images, const EvalOptions& options) {
  MetricsReport r;
  r.num_images = static_cast<int>(images.size());
  for (const auto& img : images) {
    r.num_gts += static_cast<int>(img.gts.size());
    r.num_detections += static_cast<int>(img.detections.size());
  }
  const auto labels = match_detections(images, options.iou_threshold);
  const auto summary = pr_curve_and_best_f1(labels, r.num_gts);
  r.precision = summary.best.precision;
  r.recall = summary.best.recall;
  r.f1 = summary.best.f1;
  r.ap50 = ap50(summary.curve);
  r.ap_all_point = ap_all_point(summary.curve);
  r.operating_threshold = options.fppi_threshold.value_or(summary.best.threshold);
  r.fppi = r.num_images > 0 ? fppi(labels, r.num_images, r.operating_threshold) : 0.0;
  for (const auto& p : summary.curve.points) r.pr_curve.emplace_back(p.recall, p.interpolated_precision);
  return r;
}

std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << "precision=" << format_number(r.precision) << "\n"
     << "recall=" << format_number(r.recall) << "\n"
     << "f1=" << format_number(r.f1) << "\n"
     << "ap50=" << format_number(r.ap50) << "\n"
     << "ap_all_point=" << format_number(r.ap_all_point) << "\n"
     << "fppi=" << format_number(r.fppi) << "\n"
     << "operating_threshold=" << format_number(r.operating_threshold) << "\n"
     << "num_images=" << r.num_images << "\n"
     << "num_gts=" << r.num_gts << "\n"
     << "num_detections=" << r.num_detections << "\n"
     << "pr_curve_points=" << r.pr_curve.size() << "\n";
  for (const auto& [rec, prec] : r.pr_curve) {
    os << "pr=" << format_number(rec) << "," << format_number(prec) << "\n";
  }
  return os.str();
}

void write_report(const std::filesystem::path& path, const MetricsReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << format_report(report);
  if (!out) throw Error("cannot write report " + path.string());
}

MetricsReport parse_report(const std::string& text) {
  MetricsReport r;
  std::istringstream in(text);
  std::string line;
  auto num = [](const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    return std::stod(s);
  };
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq);
    const auto val = line.substr(eq + 1);
    if (key == "precision") r.precision = num(val);
    else if (key == "recall") r.recall = num(val);
    else if (key == "f1") r.f1 = num(val);
    else if (key == "ap50") r.ap50 = num(val);
    else if (key == "ap_all_point") r.ap_all_point = num(val);
    else if (key == "fppi") r.fppi = num(val);
    else if (key == "operating_threshold") r.operating_threshold = num(val);
    else if (key == "num_images") r.num_images = std::stoi(val);
    else if (key == "num_gts") r.num_gts = std::stoi(val);
    else if (key == "num_detections") r.num_detections = std::stoi(val);
    else if (key == "pr") {
      const auto comma = val.find(',');
      r.pr_curve.emplace_back(num(val.substr(0, comma)), num(val.substr(comma + 1)));
    }
  }
  return r;
}

}  // namespace c2f::metrics
