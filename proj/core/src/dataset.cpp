// SPDX-License-Identifier: Apache-2.0
#include "c2fdet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace c2f {

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

constexpr const char* kAnnotationHeader = "frame_index,object_id,x1,y1,x2,y2";
constexpr const char* kPredictionHeader = "frame_index,score,x1,y1,x2,y2";

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_field(std::string_view field, const fs::path& file, int line_no) {
  field = trim(field);
  T value{};
  auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw DatasetError(file.string() + ":" + std::to_string(line_no) + ": malformed field '" +
                       std::string(field) + "'");
  }
  return value;
}

std::string frame_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.png", index);
  return buf;
}

}  // namespace

void write_png(const fs::path& path, const synth::Image& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw DatasetError("cannot write image " + path.string());
}

synth::Image read_png(const fs::path& path) {
  if (!fs::exists(path)) throw DatasetError("missing frame file " + path.string());
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DatasetError("cannot decode image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  synth::Image img(rgb.cols, rgb.rows);
  for (int y = 0; y < rgb.rows; ++y) {
    std::copy_n(rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3,
                img.rgb.begin() + static_cast<std::ptrdiff_t>(y) * rgb.cols * 3);
  }
  return img;
}

void write_annotations(const fs::path& csv, std::span<const synth::GroundTruthAnnotation> annotations) {
  std::ofstream out(csv);
  if (!out) throw DatasetError("cannot write " + csv.string());
  out << kAnnotationHeader << "\n";
  for (const auto& ann : annotations) {
    for (std::size_t i = 0; i < ann.boxes.size(); ++i) {
      const auto& b = ann.boxes[i];
      out << ann.frame_index << "," << ann.object_ids[i] << "," << format_number(b.x1) << ","
          << format_number(b.y1) << "," << format_number(b.x2) << "," << format_number(b.y2)
          << "\n";
    }
  }
}

std::vector<synth::GroundTruthAnnotation> read_annotations(const fs::path& csv, int num_frames,
                                                           FrameShape shape) {
  std::ifstream in(csv);
  if (!in) throw DatasetError("missing annotation file " + csv.string());
  std::vector<synth::GroundTruthAnnotation> anns(static_cast<std::size_t>(num_frames));
  for (int i = 0; i < num_frames; ++i) anns[i].frame_index = i;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty()) continue;
    if (line_no == 1 && view == kAnnotationHeader) continue;
    const auto fields = split_csv(view);
    if (fields.size() != 6) {
      throw DatasetError(csv.string() + ":" + std::to_string(line_no) + ": expected 6 columns, got " +
                         std::to_string(fields.size()));
    }
    const int frame = parse_field<int>(fields[0], csv, line_no);
    if (frame < 0 || frame >= num_frames) {
      throw DatasetError(csv.string() + ":" + std::to_string(line_no) + ": frame " +
                         std::to_string(frame) + " out of range");
    }
    const int id = parse_field<int>(fields[1], csv, line_no);
    Box b{parse_field<double>(fields[2], csv, line_no), parse_field<double>(fields[3], csv, line_no),
          parse_field<double>(fields[4], csv, line_no), parse_field<double>(fields[5], csv, line_no)};
    anns[frame].boxes.push_back(b);
    anns[frame].object_ids.push_back(id);
  }
  for (const auto& ann : anns) synth::validate_annotation(ann, shape);
  return anns;
}

DatasetManifest write_dataset(std::span<const synth::VideoClip> clips, const fs::path& root) {
  fs::create_directories(root);
  DatasetManifest manifest;
  json j;
  j["clips"] = json::array();
  for (const auto& clip : clips) {
    if (clip.frames.size() != clip.annotations.size()) {
      throw DatasetError("clip " + clip.name + ": frame/annotation count mismatch");
    }
    const auto dir = root / clip.name;
    fs::create_directories(dir / "frames");
    const FrameShape shape = clip.shape();
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      if (clip.frames[f].shape() != shape) {
        throw DatasetError("clip " + clip.name + ": frame " + std::to_string(f) +
                           " has a different size");
      }
      write_png(dir / "frames" / frame_file_name(static_cast<int>(f)), clip.frames[f]);
    }
    write_annotations(dir / "annotations.csv", clip.annotations);
    ManifestEntry e{clip.name, static_cast<int>(clip.frames.size()), shape.width, shape.height};
    manifest.clips.push_back(e);
    j["clips"].push_back(
        {{"name", e.name}, {"num_frames", e.num_frames}, {"width", e.width}, {"height", e.height}});
  }
  std::ofstream out(root / "manifest.json");
  out << j.dump(2) << "\n";
  if (!out) throw DatasetError("cannot write manifest in " + root.string());
  return manifest;
}

DatasetManifest read_manifest(const fs::path& root) {
  const auto path = root / "manifest.json";
  if (!fs::exists(root) || !fs::is_directory(root)) {
    throw DatasetError("dataset root " + root.string() + " does not exist");
  }
  if (!fs::exists(path)) throw DatasetError("no clips found in " + root.string());
  std::ifstream in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DatasetError("malformed manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    for (const auto& c : j.at("clips")) {
      m.clips.push_back({c.at("name").get<std::string>(), c.at("num_frames").get<int>(),
                         c.at("width").get<int>(), c.at("height").get<int>()});
    }
  } catch (const json::exception& e) {
    throw DatasetError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (m.clips.empty()) throw DatasetError("no clips found in " + root.string());
  return m;
}

std::vector<synth::VideoClip> read_dataset(const fs::path& root) {
  const auto manifest = read_manifest(root);
  std::vector<synth::VideoClip> clips;
  for (const auto& e : manifest.clips) {
    synth::VideoClip clip;
    clip.name = e.name;
    const auto dir = root / e.name;
    for (int f = 0; f < e.num_frames; ++f) {
      auto img = read_png(dir / "frames" / frame_file_name(f));
      if (img.width != e.width || img.height != e.height) {
        throw DatasetError("clip " + e.name + " frame " + std::to_string(f) + ": image is " +
                           std::to_string(img.width) + "x" + std::to_string(img.height) +
                           " but manifest says " + std::to_string(e.width) + "x" +
                           std::to_string(e.height));
      }
      clip.frames.push_back(std::move(img));
    }
    clip.annotations = read_annotations(dir / "annotations.csv", e.num_frames, {e.width, e.height});
    clips.push_back(std::move(clip));
  }
  return clips;
}

void write_predictions(const fs::path& csv, std::span<const FrameDetections> frames) {
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  std::ofstream out(csv);
  if (!out) throw DatasetError("cannot write " + csv.string());
  out << kPredictionHeader << "\n";
  std::vector<FrameDetections> sorted(frames.begin(), frames.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.frame_index < b.frame_index; });
  for (auto& f : sorted) {
    std::stable_sort(f.detections.begin(), f.detections.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    for (const auto& d : f.detections) {
      out << f.frame_index << "," << format_number(d.score) << "," << format_number(d.box.x1)
          << "," << format_number(d.box.y1) << "," << format_number(d.box.x2) << ","
          << format_number(d.box.y2) << "\n";
    }
  }
}

std::vector<FrameDetections> read_predictions(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw DatasetError("missing prediction file " + csv.string());
  std::map<int, FrameDetections> by_frame;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty()) continue;
    if (line_no == 1 && view == kPredictionHeader) continue;
    const auto fields = split_csv(view);
    if (fields.size() != 6) {
      throw DatasetError(csv.string() + ":" + std::to_string(line_no) + ": expected 6 columns");
    }
    const int frame = parse_field<int>(fields[0], csv, line_no);
    Detection d;
    d.score = parse_field<double>(fields[1], csv, line_no);
    d.box = {parse_field<double>(fields[2], csv, line_no), parse_field<double>(fields[3], csv, line_no),
             parse_field<double>(fields[4], csv, line_no), parse_field<double>(fields[5], csv, line_no)};
    if (!(d.box.x2 > d.box.x1 && d.box.y2 > d.box.y1)) {
      throw DatasetError(csv.string() + ":" + std::to_string(line_no) + ": frame " +
                         std::to_string(frame) + ": degenerate box " + to_string(d.box));
    }
    auto& fd = by_frame[frame];
    fd.frame_index = frame;
    fd.detections.push_back(d);
  }
  std::vector<FrameDetections> out;
  for (auto& [_, fd] : by_frame) out.push_back(std::move(fd));
  return out;
}

}  // namespace c2f
