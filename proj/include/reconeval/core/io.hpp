#pragma once

#include <filesystem>

#include "reconeval/core/types.hpp"

namespace reconeval {

enum class CloudFormat { ply_binary, ply_ascii, xyz };

struct CloudWriteOptions {
  CloudFormat format = CloudFormat::ply_binary;
  /// Significant digits for ASCII formats.
  int ascii_digits = 9;
};

/// Reads ASCII PLY, binary_little_endian PLY, or whitespace-separated XYZ
/// text (chosen by file content, not extension). A "gray"/"intensity"/
/// "scalar_intensity" vertex property becomes the intensity channel: 8/16-bit
/// integers are normalized by their maximum, floats are taken as-is.
PointCloud load_pointcloud(const std::filesystem::path& path);

/// Format defaults to binary PLY; ".xyz"/".txt" paths write XYZ text when
/// no options are given.
void save_pointcloud(const PointCloud& cloud, const std::filesystem::path& path);
void save_pointcloud(const PointCloud& cloud, const std::filesystem::path& path,
                     const CloudWriteOptions& options);

/// PGM (P2/P5, maxval <= 255) or 8-bit grayscale PNG.
GrayImage load_image(const std::filesystem::path& path);
/// Writes PNG for ".png" paths and binary PGM (P5) otherwise.
void save_image(const GrayImage& image, const std::filesystem::path& path);

}  // namespace reconeval
