#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "reconeval/core/types.hpp"

namespace reconeval {

struct AlignmentResult {
  Sim3Transform transform;
  double rms_residual = 0.0;
  double inlier_fraction = 0.0;
  int iterations_used = 0;
  /// ICP only: RMS after each accepted iteration, starting with the initial
  /// transform.
  std::vector<double> rms_trace;
  /// align_full only: "pca" or "global".
  std::string coarse_method;
};

struct IcpConfig {
  int max_iterations = 50;
  double convergence_epsilon = 1e-6;
  double max_correspondence_distance = 0.05;
  /// Solve a similarity (Umeyama) instead of a rigid motion each iteration.
  bool estimate_scale = false;
  void validate() const;
};

struct GlobalRegistrationConfig {
  double normal_radius_factor = 2.0;
  double feature_radius_factor = 5.0;
  double inlier_threshold_factor = 1.5;
  double min_inlier_fraction = 0.10;
  int max_iterations = 20000;
  double confidence = 0.999;
  /// Sample edges must agree in length within this ratio.
  double edge_length_ratio = 0.9;
  std::uint64_t seed = 42;
};

struct AlignConfig {
  /// Voxel size for global registration, as a fraction of the reference
  /// bounding-box diagonal.
  double voxel_fraction = 0.02;
  /// ICP correspondence gate as a fraction of the reference diagonal.
  double max_correspondence_fraction = 0.05;
  int icp_max_iterations = 50;
  double icp_convergence_epsilon = 1e-6;
  bool icp_estimate_scale = true;
  double min_eigenvalue_ratio = 1.05;
  GlobalRegistrationConfig global;
};

double estimate_scale(const PointCloud& reference, const PointCloud& reconstructed);

/// Same ratio, but each diagonal is measured in the cloud's own principal
/// frame, so an arbitrary rotation of either cloud does not bias it. Falls
/// back to the axis-aligned box for (near) collinear clouds.
double estimate_scale_oriented(const PointCloud& reference, const PointCloud& reconstructed);

/// Rigid transform taking the reconstructed principal frame onto the
/// reference one (centroid to centroid). Throws AmbiguousAxes when two
/// covariance eigenvalues are within `min_eigenvalue_ratio` of each other.
Sim3Transform pca_orient(const PointCloud& reference, const PointCloud& reconstructed,
                         double min_eigenvalue_ratio = 1.05);

AlignmentResult global_register(const PointCloud& reference, const PointCloud& reconstructed,
                                double voxel_size, const GlobalRegistrationConfig& config = {});

AlignmentResult icp_refine(const PointCloud& reference, const PointCloud& reconstructed,
                           const Sim3Transform& initial, const IcpConfig& config = {});

AlignmentResult align_full(const PointCloud& reference, const PointCloud& reconstructed,
                           const AlignConfig& config = {});

// Building blocks, exposed for testing.

/// Centroid of each occupied voxel, ordered by voxel key. Independent of
/// input order.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size);

/// Unit normals from local PCA, oriented away from the cloud centroid.
std::vector<Point3> estimate_normals(const PointCloud& cloud, double radius);

using FpfhDescriptor = std::array<double, 33>;
std::vector<FpfhDescriptor> compute_fpfh(const PointCloud& cloud, const std::vector<Point3>& normals,
                                         double radius);

/// Least-squares transform mapping src[i] onto dst[i]; similarity when
/// `with_scale`, rigid otherwise.
Sim3Transform fit_transform(const std::vector<Point3>& src, const std::vector<Point3>& dst,
                            bool with_scale = false);

}  // namespace reconeval
