#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "reconeval/core/types.hpp"

namespace reconeval {

struct CaptureRecord {
  std::string path;
  double timestamp = 0.0;
  /// Radians in [-pi, pi].
  double yaw = 0.0;
  std::optional<Point3> position;
};

using CaptureManifest = std::vector<CaptureRecord>;

/// CSV with columns path,timestamp,yaw[,x,y,z]. A first line starting with
/// "path" is treated as a header; blank lines and lines starting with '#'
/// are skipped. Throws MalformedFile on bad rows, IoFailure if unreadable.
CaptureManifest load_manifest(const std::filesystem::path& path);

/// Orders images by timestamp (stable) and splits wherever the wrapped yaw
/// change or the time gap to the previous image exceeds its limit. Returns
/// manifest indices; every index appears in exactly one group.
std::vector<std::vector<std::size_t>> group_images(const CaptureManifest& manifest, double yaw_bin,
                                                   double time_gap);

struct CaptureSummary {
  std::size_t n_taken = 0;
  std::size_t n_used = 0;
  std::size_t n_groups = 0;
  /// "path: reason" for every image that could not be read.
  std::vector<std::string> skipped;
};

/// Loads every listed image (paths relative to `image_dir`) to count how
/// many are usable, then groups the usable ones.
CaptureSummary summarize_capture(const CaptureManifest& manifest, const std::filesystem::path& image_dir,
                                 double yaw_bin, double time_gap);

}  // namespace reconeval
