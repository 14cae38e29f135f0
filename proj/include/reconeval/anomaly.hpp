#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "reconeval/core/types.hpp"

namespace reconeval {

struct AnomalyRegion {
  Point3 centroid = Point3::Zero();
  std::size_t point_count = 0;
  double max_deviation = 0.0;
  /// Indices into the anomalous cloud, ascending.
  std::vector<std::size_t> indices;
};

struct AnomalyConfig {
  /// Fixed detection threshold in meters; when unset the default rule
  /// max(min_threshold, baseline_multiple * hd_baseline) applies.
  std::optional<double> threshold;
  double min_threshold = 0.01;
  double baseline_multiple = 2.0;
  /// Points deviating more than this are candidates for localization.
  /// Defaults to hd_baseline.
  std::optional<double> deviation_cutoff;
  /// Single-linkage radius. Defaults to spacing_factor times the mean point
  /// spacing of the anomalous cloud.
  std::optional<double> cluster_radius;
  double spacing_factor = 3.0;
  std::size_t min_cluster_points = 10;
  void validate() const;
};

struct AnomalyReport {
  double hd_baseline = 0.0;
  double hd_anomalous = 0.0;
  double delta_hd = 0.0;
  bool detected = false;
  double threshold = 0.0;
  /// "default" or "fixed".
  std::string threshold_rule;
  /// Reported alongside, not used for the decision.
  double chamfer_baseline = 0.0;
  double chamfer_anomalous = 0.0;
  double deviation_cutoff = 0.0;
  double cluster_radius = 0.0;
  std::vector<AnomalyRegion> regions;
};

double default_anomaly_threshold(double hd_baseline, const AnomalyConfig& config = {});

/// Nearest-reference distance for every point of the anomalous cloud.
std::vector<double> deviation_field(const PointCloud& reference, const PointCloud& anomalous);

/// Clusters the points whose deviation exceeds the cutoff. Clusters smaller
/// than min_points are dropped; the rest come back sorted by max deviation,
/// largest first (ties by lowest member index).
std::vector<AnomalyRegion> localize_anomaly(const PointCloud& anomalous, const std::vector<double>& field,
                                            double deviation_cutoff, double cluster_radius,
                                            std::size_t min_points = 10);

/// Both reconstructions must already be aligned to the reference.
AnomalyReport detect_anomaly(const PointCloud& reference, const PointCloud& baseline, const PointCloud& anomalous,
                             const AnomalyConfig& config = {});
AnomalyReport detect_anomaly(const PointCloud& reference, const PointCloud& baseline, const PointCloud& anomalous,
                             double threshold);

/// Writes the localized points as a PLY whose intensity is the deviation
/// divided by the largest deviation in the field.
void save_anomaly_points(const PointCloud& anomalous, const std::vector<double>& field,
                         const std::vector<AnomalyRegion>& regions, const std::filesystem::path& path);

}  // namespace reconeval
