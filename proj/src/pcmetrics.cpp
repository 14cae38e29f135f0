#include "reconeval/pcmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "reconeval/core/kdtree.hpp"
#include "reconeval/error.hpp"

namespace reconeval {

std::vector<double> nn_distances(const PointCloud& from, const PointCloud& to) {
  if (from.empty() || to.empty()) throw EmptyCloud("nearest-neighbor distances need non-empty clouds");
  const NearestNeighborIndex index(to);
  std::vector<double> out(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) out[i] = index.nearest(from.points[i]).distance;
  return out;
}

namespace {

DirectedHausdorff max_with_witness(const std::vector<double>& d) {
  DirectedHausdorff h;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > h.distance) {
      h.distance = d[i];
      h.witness_index = i;
    }
  }
  return h;
}

double mean_in_order(const std::vector<double>& d) {
  double s = 0.0;
  for (double v : d) s += v;
  return s / static_cast<double>(d.size());
}

}  // namespace

DirectedHausdorff directed_hausdorff(const PointCloud& a, const PointCloud& b) {
  return max_with_witness(nn_distances(a, b));
}

double hausdorff(const PointCloud& a, const PointCloud& b) {
  return std::max(directed_hausdorff(a, b).distance, directed_hausdorff(b, a).distance);
}

double chamfer_mean(const PointCloud& a, const PointCloud& b) {
  return 0.5 * (mean_in_order(nn_distances(a, b)) + mean_in_order(nn_distances(b, a)));
}

PointCloud farthest_point_subsample(const PointCloud& cloud, std::size_t count, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (count >= n) return cloud;
  if (count == 0) return {};
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> chosen;
  chosen.reserve(count);
  std::size_t current = static_cast<std::size_t>(seed % n);
  for (std::size_t k = 0; k < count; ++k) {
    chosen.push_back(current);
    min_d2[current] = -1.0;
    std::size_t next = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_d2[i] < 0.0) continue;
      min_d2[i] = std::min(min_d2[i], squared_distance(cloud.points[i], cloud.points[current]));
      if (min_d2[i] > best) {
        best = min_d2[i];
        next = i;
      }
    }
    current = next;
  }
  PointCloud out;
  out.points.reserve(count);
  if (cloud.intensity) out.intensity.emplace().reserve(count);
  for (std::size_t i : chosen) {
    out.points.push_back(cloud.points[i]);
    if (cloud.intensity) out.intensity->push_back((*cloud.intensity)[i]);
  }
  return out;
}

std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n) {
  if (cost.size() != n * n) throw InvalidArgument("assignment cost matrix must be n*n");
  // Shortest augmenting paths with row/column potentials (1-based internally;
  // column 0 is the virtual source).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[col0] = 1;
      const std::size_t r = match[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double reduced = cost[(r - 1) * n + (c - 1)] - u[r] - v[c];
        if (reduced < minv[c]) {
          minv[c] = reduced;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t c = 1; c <= n; ++c) assignment[match[c] - 1] = c - 1;
  return assignment;
}

double exact_assignment_distance(const PointCloud& a, const PointCloud& b) {
  if (a.size() != b.size()) throw InvalidArgument("exact assignment needs equal-size clouds");
  if (a.empty()) throw EmptyCloud("exact assignment of empty clouds");
  const std::size_t n = a.size();
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = (a.points[i] - b.points[j]).norm();
  }
  const auto assignment = solve_assignment(cost, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += cost[i * n + assignment[i]];
  return total / static_cast<double>(n);
}

WassersteinResult sinkhorn_distance(const PointCloud& a, const PointCloud& b, double epsilon,
                                    int max_iterations, double tolerance) {
  if (a.empty() || b.empty()) throw EmptyCloud("Sinkhorn needs non-empty clouds");
  if (!(epsilon > 0.0)) throw InvalidArgument("Sinkhorn epsilon must be positive");
  const std::size_t n = a.size(), m = b.size();
  const double ra = 1.0 / static_cast<double>(n), rb = 1.0 / static_cast<double>(m);

  std::vector<double> cost(n * m), kernel(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double c = (a.points[i] - b.points[j]).norm();
      cost[i * m + j] = c;
      kernel[i * m + j] = std::exp(-c / epsilon);
    }
  }

  std::vector<double> u(n, 1.0), v(m, 1.0), kv(n), ktu(m);
  auto diverged = [](const std::vector<double>& x) {
    return std::any_of(x.begin(), x.end(), [](double t) { return !std::isfinite(t) || t <= 0.0; });
  };
  int it = 0;
  for (; it < max_iterations; ++it) {
    std::fill(ktu.begin(), ktu.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = &kernel[i * m];
      for (std::size_t j = 0; j < m; ++j) ktu[j] += row[j] * u[i];
    }
    for (std::size_t j = 0; j < m; ++j) v[j] = rb / ktu[j];
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = &kernel[i * m];
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += row[j] * v[j];
      kv[i] = s;
      err += std::abs(u[i] * s - ra);
    }
    if (diverged(v)) throw SolverDiverged("Sinkhorn scaling became non-finite; increase epsilon");
    if (err < tolerance) break;
    for (std::size_t i = 0; i < n; ++i) u[i] = ra / kv[i];
    if (diverged(u)) throw SolverDiverged("Sinkhorn scaling became non-finite; increase epsilon");
  }

  // Round the scaled kernel onto the transport polytope.
  std::vector<double> plan(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) plan[i * m + j] = u[i] * kernel[i * m + j] * v[j];
  }
  std::vector<double> row_sum(n, 0.0), col_sum(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) row_sum[i] += plan[i * m + j];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double x = row_sum[i] > 0.0 ? std::min(1.0, ra / row_sum[i]) : 1.0;
    for (std::size_t j = 0; j < m; ++j) plan[i * m + j] *= x;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) col_sum[j] += plan[i * m + j];
  }
  std::vector<double> y(m);
  for (std::size_t j = 0; j < m; ++j) y[j] = col_sum[j] > 0.0 ? std::min(1.0, rb / col_sum[j]) : 1.0;
  std::fill(row_sum.begin(), row_sum.end(), 0.0);
  std::fill(col_sum.begin(), col_sum.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      plan[i * m + j] *= y[j];
      row_sum[i] += plan[i * m + j];
      col_sum[j] += plan[i * m + j];
    }
  }
  std::vector<double> err_r(n), err_c(m);
  double err_mass = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    err_r[i] = std::max(0.0, ra - row_sum[i]);
    err_mass += err_r[i];
  }
  for (std::size_t j = 0; j < m; ++j) err_c[j] = std::max(0.0, rb - col_sum[j]);

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double p = plan[i * m + j];
      if (err_mass > 0.0) p += err_r[i] * err_c[j] / err_mass;
      total += p * cost[i * m + j];
    }
  }
  if (!std::isfinite(total)) throw SolverDiverged("Sinkhorn produced a non-finite cost");

  WassersteinResult r;
  r.distance = total;
  r.method = TransportMethod::sinkhorn;
  r.points_a = n;
  r.points_b = m;
  r.iterations = it;
  r.epsilon = epsilon;
  return r;
}

WassersteinResult wasserstein_solve(const PointCloud& a, const PointCloud& b,
                                    const WassersteinConfig& config) {
  if (a.empty() || b.empty()) throw EmptyCloud("Wasserstein distance needs non-empty clouds");
  if (std::max(a.size(), b.size()) <= config.exact_threshold) {
    const std::size_t n = std::min(a.size(), b.size());
    const PointCloud ea = farthest_point_subsample(a, n, config.seed);
    const PointCloud eb = farthest_point_subsample(b, n, config.seed);
    WassersteinResult r;
    r.distance = exact_assignment_distance(ea, eb);
    r.method = TransportMethod::exact;
    r.points_a = r.points_b = n;
    return r;
  }
  const PointCloud sa = farthest_point_subsample(a, config.sinkhorn_max_points, config.seed);
  const PointCloud sb = farthest_point_subsample(b, config.sinkhorn_max_points, config.seed);
  if (sa.points == sb.points) {
    // Identical samples: the identity plan is optimal at zero cost, which the
    // entropic solver would only approach up to its regularization bias.
    WassersteinResult r;
    r.method = TransportMethod::exact;
    r.points_a = r.points_b = sa.size();
    return r;
  }
  double eps = config.sinkhorn_epsilon;
  if (!(eps > 0.0)) {
    AxisAlignedBox box = bounding_box(sa);
    const AxisAlignedBox bb = bounding_box(sb);
    box.min_corner = box.min_corner.cwiseMin(bb.min_corner);
    box.max_corner = box.max_corner.cwiseMax(bb.max_corner);
    eps = config.sinkhorn_epsilon_fraction * box.diagonal();
    // Coincident single points: any positive epsilon gives the exact answer.
    if (!(eps > 0.0)) eps = 1.0;
  }
  return sinkhorn_distance(sa, sb, eps, config.sinkhorn_max_iterations, config.sinkhorn_tolerance);
}

PointCloudMetricSet compute_pc_metrics(const PointCloud& reference,
                                       const PointCloud& reconstructed_aligned,
                                       const PcMetricsConfig& config) {
  reference.validate_nonempty();
  reconstructed_aligned.validate_nonempty();
  PointCloudMetricSet m;
  m.per_point_dist_rec_to_ref = nn_distances(reconstructed_aligned, reference);
  const std::vector<double> ref_to_rec = nn_distances(reference, reconstructed_aligned);
  m.hausdorff = std::max(max_with_witness(m.per_point_dist_rec_to_ref).distance,
                         max_with_witness(ref_to_rec).distance);
  m.chamfer_mean = 0.5 * (mean_in_order(ref_to_rec) +
                          mean_in_order(m.per_point_dist_rec_to_ref));
  m.wasserstein_detail = wasserstein_solve(reference, reconstructed_aligned, config.wasserstein);
  m.wasserstein = m.wasserstein_detail.distance;
  return m;
}

std::string to_string(TransportMethod m) {
  return m == TransportMethod::exact ? "exact" : "sinkhorn";
}

}  // namespace reconeval
