#include "reconeval/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reconeval/core/io.hpp"
#include "reconeval/core/kdtree.hpp"
#include "reconeval/error.hpp"
#include "reconeval/pcmetrics.hpp"
#include "reconeval/synth.hpp"

namespace reconeval {

namespace {

bool finite_non_negative(double v) { return std::isfinite(v) && v >= 0.0; }

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

void AnomalyConfig::validate() const {
  if (threshold && !finite_non_negative(*threshold)) throw InvalidArgument("anomaly threshold must be >= 0");
  if (!finite_non_negative(min_threshold)) throw InvalidArgument("anomaly min_threshold must be >= 0");
  if (!finite_non_negative(baseline_multiple)) throw InvalidArgument("anomaly baseline_multiple must be >= 0");
  if (deviation_cutoff && !finite_non_negative(*deviation_cutoff)) {
    throw InvalidArgument("anomaly deviation_cutoff must be >= 0");
  }
  if (cluster_radius && !(std::isfinite(*cluster_radius) && *cluster_radius > 0.0)) {
    throw InvalidArgument("anomaly cluster_radius must be > 0");
  }
  if (!(std::isfinite(spacing_factor) && spacing_factor > 0.0)) {
    throw InvalidArgument("anomaly spacing_factor must be > 0");
  }
  if (min_cluster_points == 0) throw InvalidArgument("anomaly min_cluster_points must be >= 1");
}

double default_anomaly_threshold(double hd_baseline, const AnomalyConfig& config) {
  return std::max(config.min_threshold, config.baseline_multiple * hd_baseline);
}

std::vector<double> deviation_field(const PointCloud& reference, const PointCloud& anomalous) {
  return nn_distances(anomalous, reference);
}

std::vector<AnomalyRegion> localize_anomaly(const PointCloud& anomalous, const std::vector<double>& field,
                                            double deviation_cutoff, double cluster_radius,
                                            std::size_t min_points) {
  if (field.size() != anomalous.size()) {
    throw InvalidArgument("deviation field has " + std::to_string(field.size()) + " entries for " +
                          std::to_string(anomalous.size()) + " points");
  }
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (field[i] > deviation_cutoff) selected.push_back(i);
  }
  if (selected.empty()) return {};

  std::vector<Point3> pts;
  pts.reserve(selected.size());
  for (std::size_t i : selected) pts.push_back(anomalous.points[i]);
  const NearestNeighborIndex index{std::span<const Point3>(pts)};

  std::vector<std::size_t> parent(pts.size());
  std::iota(parent.begin(), parent.end(), 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j : index.radius(pts[i], cluster_radius)) {
      if (j <= i) continue;
      const std::size_t ri = find_root(parent, i), rj = find_root(parent, j);
      if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
    }
  }

  // Roots are the smallest local index of each cluster, so iterating in
  // index order keeps member lists ascending.
  std::vector<std::vector<std::size_t>> members(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) members[find_root(parent, i)].push_back(i);

  std::vector<AnomalyRegion> regions;
  for (const auto& m : members) {
    if (m.empty() || m.size() < min_points) continue;
    AnomalyRegion r;
    r.point_count = m.size();
    for (std::size_t local : m) {
      const std::size_t global = selected[local];
      r.indices.push_back(global);
      r.centroid += anomalous.points[global];
      r.max_deviation = std::max(r.max_deviation, field[global]);
    }
    r.centroid /= static_cast<double>(m.size());
    regions.push_back(std::move(r));
  }
  std::stable_sort(regions.begin(), regions.end(), [](const AnomalyRegion& a, const AnomalyRegion& b) {
    return a.max_deviation > b.max_deviation;
  });
  return regions;
}

AnomalyReport detect_anomaly(const PointCloud& reference, const PointCloud& baseline, const PointCloud& anomalous,
                             const AnomalyConfig& config) {
  config.validate();
  if (reference.empty() || baseline.empty() || anomalous.empty()) {
    throw EmptyCloud("anomaly detection needs non-empty reference, baseline and anomalous clouds");
  }
  AnomalyReport r;
  r.hd_baseline = hausdorff(reference, baseline);
  r.hd_anomalous = hausdorff(reference, anomalous);
  r.delta_hd = r.hd_anomalous - r.hd_baseline;
  r.threshold_rule = config.threshold ? "fixed" : "default";
  r.threshold = config.threshold ? *config.threshold : default_anomaly_threshold(r.hd_baseline, config);
  r.detected = r.delta_hd > r.threshold;
  r.chamfer_baseline = chamfer_mean(reference, baseline);
  r.chamfer_anomalous = chamfer_mean(reference, anomalous);

  r.deviation_cutoff = config.deviation_cutoff.value_or(r.hd_baseline);
  r.cluster_radius = config.cluster_radius.value_or(config.spacing_factor * mean_point_spacing(anomalous));
  if (r.cluster_radius > 0.0) {
    r.regions = localize_anomaly(anomalous, deviation_field(reference, anomalous), r.deviation_cutoff,
                                 r.cluster_radius, config.min_cluster_points);
  }
  return r;
}

AnomalyReport detect_anomaly(const PointCloud& reference, const PointCloud& baseline, const PointCloud& anomalous,
                             double threshold) {
  AnomalyConfig config;
  config.threshold = threshold;
  return detect_anomaly(reference, baseline, anomalous, config);
}

void save_anomaly_points(const PointCloud& anomalous, const std::vector<double>& field,
                         const std::vector<AnomalyRegion>& regions, const std::filesystem::path& path) {
  if (field.size() != anomalous.size()) throw InvalidArgument("deviation field does not match the cloud");
  const double peak = field.empty() ? 0.0 : *std::max_element(field.begin(), field.end());
  PointCloud out;
  out.intensity.emplace();
  for (const auto& region : regions) {
    for (std::size_t i : region.indices) {
      out.points.push_back(anomalous.points[i]);
      out.intensity->push_back(peak > 0.0 ? field[i] / peak : 0.0);
    }
  }
  save_pointcloud(out, path);
}

}  // namespace reconeval
