#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "reconeval/core/types.hpp"

namespace reconeval {

struct PreprocessConfig {
  double sharpen_amount = 1.0;
  int brightness_offset = 10;
  double gamma = 1.0;
  void validate() const;
};

/// gamma (255 (x/255)^(1/gamma)) -> brightness offset -> unsharp mask with a
/// 3x3 box blur (replicated borders); clamped to [0, 255] after each step and
/// rounded once at the end.
GrayImage preprocess(const GrayImage& image, const PreprocessConfig& config);

struct Keypoint {
  double u = 0.0;
  double v = 0.0;
  double response = 0.0;
};

using BinaryDescriptor = std::array<std::uint64_t, 4>;

struct FeatureSet {
  std::vector<Keypoint> keypoints;
  std::vector<BinaryDescriptor> descriptors;
  std::size_t size() const { return keypoints.size(); }
};

struct DetectorConfig {
  std::size_t max_features = 2000;
  double harris_k = 0.04;
  /// Absolute Harris threshold, in (intensity/px)^4 with Sobel gradients
  /// normalized by 1/8. Absolute on purpose: contrast changes then change
  /// the number of detections.
  double min_response = 2e5;
  int nms_radius = 4;
};

/// Harris corners with binary descriptors from 256 fixed intensity tests in
/// a 31x31 patch. Keypoints whose patch leaves the image are dropped.
FeatureSet detect_features(const GrayImage& image, const DetectorConfig& config);
FeatureSet detect_features(const GrayImage& image, std::size_t max_features = 2000);

/// Harris response map (row-major, same size as the image).
std::vector<double> harris_response(const GrayImage& image, double k = 0.04);

int hamming_distance(const BinaryDescriptor& a, const BinaryDescriptor& b);

struct FeatureMatch {
  std::size_t index_a = 0;
  std::size_t index_b = 0;
  int distance = 0;
};

struct MatchResult {
  std::vector<FeatureMatch> matches;
  /// Indices into `matches`.
  std::vector<std::size_t> inliers;
  std::optional<Eigen::Matrix3d> model;
  int iterations_run = 0;
};

/// Mutual nearest neighbours under Hamming distance that also pass the 0.8
/// ratio test on the a -> b side.
std::vector<FeatureMatch> match_descriptors(const FeatureSet& a, const FeatureSet& b, double ratio = 0.8);

/// Normalized DLT through >= 4 correspondences; nullopt when degenerate.
std::optional<Eigen::Matrix3d> fit_homography(const std::vector<Eigen::Vector2d>& from,
                                              const std::vector<Eigen::Vector2d>& to);

/// sqrt(|H a - b|^2 + |H^-1 b - a|^2); infinity if H is singular or maps to infinity.
double symmetric_transfer_error(const Eigen::Matrix3d& h, const Eigen::Vector2d& a, const Eigen::Vector2d& b);

MatchResult match_and_verify(const FeatureSet& a, const FeatureSet& b, int max_ransac_iters, double inlier_px,
                             std::uint64_t seed = 42);

struct SweepRow {
  int budget = 0;
  int repeat = 0;
  std::size_t inlier_count = 0;
  double elapsed_seconds = 0.0;
};

/// One match_and_verify per (budget, repeat); the seed for each run is
/// base_seed + budget + 1000003 * repeat.
std::vector<SweepRow> ransac_sweep(const FeatureSet& a, const FeatureSet& b, const std::vector<int>& budgets,
                                   int repeats = 1, double inlier_px = 3.0, std::uint64_t base_seed = 42);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace reconeval
