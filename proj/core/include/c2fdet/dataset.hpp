// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "c2fdet/detection.hpp"
#include "c2fdet/synthdata.hpp"

namespace c2f {

// On-disk layout:
//   <root>/manifest.json
//   <root>/<clip>/annotations.csv        frame_index,object_id,x1,y1,x2,y2
//   <root>/<clip>/frames/000000.png ...

struct ManifestEntry {
  std::string name;
  int num_frames = 0;
  int width = 0;
  int height = 0;
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> clips;
  bool operator==(const DatasetManifest&) const = default;
};

DatasetManifest write_dataset(std::span<const synth::VideoClip> clips,
                              const std::filesystem::path& root);
std::vector<synth::VideoClip> read_dataset(const std::filesystem::path& root);

DatasetManifest read_manifest(const std::filesystem::path& root);

/// Reads one clip's annotation table. Frames without rows get empty lists.
std::vector<synth::GroundTruthAnnotation> read_annotations(const std::filesystem::path& csv,
                                                           int num_frames, FrameShape shape);
void write_annotations(const std::filesystem::path& csv,
                       std::span<const synth::GroundTruthAnnotation> annotations);

/// Prediction table: frame_index,score,x1,y1,x2,y2 (pixels), rows sorted by
/// frame then descending score.
void write_predictions(const std::filesystem::path& csv, std::span<const FrameDetections> frames);
std::vector<FrameDetections> read_predictions(const std::filesystem::path& csv);

void write_png(const std::filesystem::path& path, const synth::Image& image);
synth::Image read_png(const std::filesystem::path& path);

/// Formats a double with the shortest representation that parses back exactly.
std::string format_number(double v);

}  // namespace c2f
