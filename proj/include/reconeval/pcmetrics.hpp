#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reconeval/core/types.hpp"

namespace reconeval {

struct DirectedHausdorff {
  double distance = 0.0;
  /// Index into the first cloud of the point realizing the maximum (lowest
  /// index on ties).
  std::size_t witness_index = 0;
};

/// Distance from every point of `from` to its nearest neighbor in `to`.
std::vector<double> nn_distances(const PointCloud& from, const PointCloud& to);

DirectedHausdorff directed_hausdorff(const PointCloud& a, const PointCloud& b);
double hausdorff(const PointCloud& a, const PointCloud& b);
/// Symmetric mean nearest-neighbor distance: (mean_a d(a,B) + mean_b d(b,A)) / 2.
double chamfer_mean(const PointCloud& a, const PointCloud& b);

struct WassersteinConfig {
  /// Exact assignment is used while max(|a|,|b|) <= exact_threshold.
  std::size_t exact_threshold = 256;
  /// Entropic regularization as a fraction of the joint bounding-box diagonal
  /// (ignored when sinkhorn_epsilon > 0).
  double sinkhorn_epsilon_fraction = 0.01;
  double sinkhorn_epsilon = 0.0;
  /// Clouds larger than this are farthest-point subsampled before Sinkhorn.
  std::size_t sinkhorn_max_points = 1024;
  int sinkhorn_max_iterations = 20000;
  /// L1 violation of the row marginal at which iterations stop.
  double sinkhorn_tolerance = 1e-9;
  std::uint64_t seed = 42;
};

enum class TransportMethod { exact, sinkhorn };

struct WassersteinResult {
  double distance = 0.0;
  TransportMethod method = TransportMethod::exact;
  std::size_t points_a = 0;
  std::size_t points_b = 0;
  int iterations = 0;
  double epsilon = 0.0;
};

/// 1-Wasserstein distance between the uniform empirical measures of the two
/// clouds with Euclidean ground cost.
WassersteinResult wasserstein_solve(const PointCloud& a, const PointCloud& b,
                                    const WassersteinConfig& config = {});
inline double wasserstein(const PointCloud& a, const PointCloud& b,
                          const WassersteinConfig& config = {}) {
  return wasserstein_solve(a, b, config).distance;
}

/// Exact W1 for equal-size clouds via shortest-augmenting-path assignment.
double exact_assignment_distance(const PointCloud& a, const PointCloud& b);

/// Entropic OT with rounding onto the transport polytope; throws
/// SolverDiverged when the scaling vectors stop being finite.
WassersteinResult sinkhorn_distance(const PointCloud& a, const PointCloud& b, double epsilon,
                                    int max_iterations, double tolerance);

/// Greedy farthest-point subsample of `count` points starting from index
/// seed % n; ties pick the lowest index. Preserves intensity.
PointCloud farthest_point_subsample(const PointCloud& cloud, std::size_t count,
                                    std::uint64_t seed = 42);

/// Square assignment solver: returns column assigned to each row, minimizing
/// the total cost. `cost` is row-major n*n.
std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n);

struct PcMetricsConfig {
  WassersteinConfig wasserstein;
};

struct PointCloudMetricSet {
  double hausdorff = 0.0;
  double chamfer_mean = 0.0;
  double wasserstein = 0.0;
  std::vector<double> per_point_dist_rec_to_ref;
  WassersteinResult wasserstein_detail;
};

PointCloudMetricSet compute_pc_metrics(const PointCloud& reference,
                                       const PointCloud& reconstructed_aligned,
                                       const PcMetricsConfig& config = {});

std::string to_string(TransportMethod m);

}  // namespace reconeval
