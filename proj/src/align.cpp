#include "reconeval/align.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <tuple>

#include "reconeval/core/kdtree.hpp"
#include "reconeval/error.hpp"
#include "reconeval/pcmetrics.hpp"

namespace reconeval {

void IcpConfig::validate() const {
  if (max_iterations < 1) throw InvalidArgument("ICP max_iterations must be positive");
  if (!(convergence_epsilon > 0.0)) throw InvalidArgument("ICP convergence_epsilon must be positive");
  if (!(max_correspondence_distance > 0.0)) throw InvalidArgument("ICP max_correspondence_distance must be positive");
}

double estimate_scale(const PointCloud& reference, const PointCloud& reconstructed) {
  reference.validate_nonempty();
  reconstructed.validate_nonempty();
  const double ref_diag = bounding_box(reference).diagonal();
  const double rec_diag = bounding_box(reconstructed).diagonal();
  if (!(ref_diag > 0.0) || !(rec_diag > 0.0)) throw DegenerateCloud("bounding box diagonal is zero");
  return ref_diag / rec_diag;
}

namespace {

Matrix3 covariance(const PointCloud& cloud, const Point3& mean) {
  Matrix3 c = Matrix3::Zero();
  for (const auto& p : cloud.points) {
    const Point3 d = p - mean;
    c += d * d.transpose();
  }
  return c / static_cast<double>(cloud.size());
}

// Eigenvectors as columns, eigenvalues ascending.
Eigen::SelfAdjointEigenSolver<Matrix3> principal_frame(const PointCloud& cloud, double min_ratio) {
  Eigen::SelfAdjointEigenSolver<Matrix3> es(covariance(cloud, cloud.centroid()));
  const Eigen::Vector3d l = es.eigenvalues();
  const double scale = std::max(l(2), std::numeric_limits<double>::min());
  if (!(l(1) > 1e-12 * scale)) throw AmbiguousAxes("cloud is (near) collinear");
  const bool low_pair_close = l(0) > 1e-12 * scale && l(1) <= min_ratio * l(0);
  if (low_pair_close || l(2) <= min_ratio * l(1)) {
    throw AmbiguousAxes("principal axes are not distinct (eigenvalues " + std::to_string(l(0)) + ", " +
                        std::to_string(l(1)) + ", " + std::to_string(l(2)) + ")");
  }
  return es;
}

double oriented_diagonal(const PointCloud& cloud) {
  const Point3 c = cloud.centroid();
  Eigen::SelfAdjointEigenSolver<Matrix3> es(covariance(cloud, c));
  const Matrix3 axes = es.eigenvectors();
  Point3 lo = Point3::Constant(std::numeric_limits<double>::infinity());
  Point3 hi = -lo;
  for (const auto& p : cloud.points) {
    const Point3 q = axes.transpose() * (p - c);
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  return (hi - lo).norm();
}

}  // namespace

double estimate_scale_oriented(const PointCloud& reference, const PointCloud& reconstructed) {
  const double axis_aligned = estimate_scale(reference, reconstructed);
  const double ref_diag = oriented_diagonal(reference);
  const double rec_diag = oriented_diagonal(reconstructed);
  if (!(ref_diag > 0.0) || !(rec_diag > 0.0) || !std::isfinite(ref_diag / rec_diag)) return axis_aligned;
  return ref_diag / rec_diag;
}

Sim3Transform pca_orient(const PointCloud& reference, const PointCloud& reconstructed,
                         double min_eigenvalue_ratio) {
  reference.validate_nonempty();
  reconstructed.validate_nonempty();
  const Matrix3 e_ref = principal_frame(reference, min_eigenvalue_ratio).eigenvectors();
  const Matrix3 e_rec = principal_frame(reconstructed, min_eigenvalue_ratio).eigenvectors();
  const Point3 c_ref = reference.centroid();
  const Point3 c_rec = reconstructed.centroid();

  Sim3Transform best;
  double best_score = std::numeric_limits<double>::infinity();
  static constexpr double kSigns[4][3] = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  for (const auto& s : kSigns) {
    Matrix3 r = e_ref * Eigen::Vector3d(s[0], s[1], s[2]).asDiagonal() * e_rec.transpose();
    if (r.determinant() < 0) r = e_ref * Eigen::Vector3d(-s[0], -s[1], -s[2]).asDiagonal() * e_rec.transpose();
    r = nearest_rotation(r);
    const Sim3Transform t(1.0, r, c_ref - r * c_rec);
    const double score = chamfer_mean(reference, t.apply(reconstructed));
    if (score < best_score) {
      best_score = score;
      best = t;
    }
  }
  return best;
}

Sim3Transform fit_transform(const std::vector<Point3>& src, const std::vector<Point3>& dst, bool with_scale) {
  if (src.size() != dst.size() || src.empty()) throw InvalidArgument("fit_transform needs matched, non-empty sets");
  const double n = static_cast<double>(src.size());
  Point3 mu_s = Point3::Zero(), mu_d = Point3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= n;
  mu_d /= n;
  Matrix3 cov = Matrix3::Zero();
  double var_s = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Point3 a = src[i] - mu_s;
    cov += (dst[i] - mu_d) * a.transpose();
    var_s += a.squaredNorm();
  }
  cov /= n;
  var_s /= n;
  Eigen::JacobiSVD<Matrix3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d d(1, 1, 1);
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2) = -1;
  const Matrix3 r = nearest_rotation(svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose());
  double s = 1.0;
  if (with_scale && var_s > 0.0) {
    const double trace = svd.singularValues().dot(d);
    if (trace > 0.0) s = trace / var_s;
  }
  return Sim3Transform(s, r, mu_d - s * (r * mu_s));
}

// ---------------------------------------------------------------------------
// Global registration

PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0.0)) throw InvalidArgument("voxel_size must be positive");
  using Key = std::array<std::int64_t, 3>;
  std::vector<std::pair<Key, Point3>> cells;
  cells.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    const Key k{static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
                static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
                static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
    cells.emplace_back(k, p);
  }
  // Sorting the points inside each voxel too makes the centroid sums bitwise
  // independent of input order.
  std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return std::tie(a.second.x(), a.second.y(), a.second.z()) < std::tie(b.second.x(), b.second.y(), b.second.z());
  });
  PointCloud out;
  for (std::size_t i = 0; i < cells.size();) {
    std::size_t j = i;
    Point3 sum = Point3::Zero();
    while (j < cells.size() && cells[j].first == cells[i].first) sum += cells[j++].second;
    out.points.push_back(sum / static_cast<double>(j - i));
    i = j;
  }
  return out;
}

std::vector<Point3> estimate_normals(const PointCloud& cloud, double radius) {
  const NearestNeighborIndex index(cloud);
  const Point3 center = cloud.centroid();
  std::vector<Point3> normals(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    std::vector<std::size_t> nb = index.radius(cloud.points[i], radius);
    if (nb.size() < 5) {
      nb.clear();
      for (const auto& n : index.knn(cloud.points[i], 6)) nb.push_back(n.index);
    }
    Point3 mean = Point3::Zero();
    for (std::size_t j : nb) mean += cloud.points[j];
    mean /= static_cast<double>(nb.size());
    Matrix3 c = Matrix3::Zero();
    for (std::size_t j : nb) {
      const Point3 d = cloud.points[j] - mean;
      c += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Matrix3> es(c);
    Point3 n = es.eigenvectors().col(0);
    if (n.dot(cloud.points[i] - center) < 0) n = -n;
    normals[i] = n;
  }
  return normals;
}

namespace {

// Darboux-frame angle triple for an oriented point pair; the source is the
// point whose normal is more aligned with the connecting line.
bool pair_features(const Point3& p1, const Point3& n1, const Point3& p2, const Point3& n2,
                   double& f1, double& f2, double& f3) {
  Point3 dp = p2 - p1;
  const double len = dp.norm();
  if (len == 0.0) return false;
  Point3 a = n1, b = n2;
  const double c1 = n1.dot(dp) / len, c2 = n2.dot(dp) / len;
  if (std::acos(std::clamp(std::abs(c1), 0.0, 1.0)) > std::acos(std::clamp(std::abs(c2), 0.0, 1.0))) {
    std::swap(a, b);
    dp = -dp;
    f3 = -c2;
  } else {
    f3 = c1;
  }
  Point3 v = dp.cross(a);
  const double vn = v.norm();
  if (vn == 0.0) return false;
  v /= vn;
  const Point3 w = a.cross(v);
  f2 = v.dot(b);
  f1 = std::atan2(w.dot(b), a.dot(b));
  return true;
}

int bin11(double x, double lo, double hi) {
  return std::clamp(static_cast<int>(std::floor(11.0 * (x - lo) / (hi - lo))), 0, 10);
}

}  // namespace

std::vector<FpfhDescriptor> compute_fpfh(const PointCloud& cloud, const std::vector<Point3>& normals,
                                         double radius) {
  const NearestNeighborIndex index(cloud);
  const std::size_t n = cloud.size();
  std::vector<std::vector<std::size_t>> neighbors(n);
  std::vector<FpfhDescriptor> spfh(n);
  for (std::size_t i = 0; i < n; ++i) {
    neighbors[i] = index.radius(cloud.points[i], radius);
    FpfhDescriptor h{};
    int count = 0;
    for (std::size_t j : neighbors[i]) {
      if (j == i) continue;
      double f1, f2, f3;
      if (!pair_features(cloud.points[i], normals[i], cloud.points[j], normals[j], f1, f2, f3)) continue;
      h[bin11(f1, -std::numbers::pi, std::numbers::pi)] += 1.0;
      h[11 + bin11(f2, -1.0, 1.0)] += 1.0;
      h[22 + bin11(f3, -1.0, 1.0)] += 1.0;
      ++count;
    }
    if (count > 0) {
      for (double& v : h) v *= 100.0 / count;
    }
    spfh[i] = h;
  }

  std::vector<FpfhDescriptor> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    FpfhDescriptor acc{};
    for (std::size_t j : neighbors[i]) {
      if (j == i) continue;
      const double d = (cloud.points[j] - cloud.points[i]).norm();
      if (d == 0.0) continue;
      for (int b = 0; b < 33; ++b) acc[b] += spfh[j][b] / d;
    }
    // Renormalize each of the three sub-histograms, then add the point's own.
    for (int part = 0; part < 3; ++part) {
      double sum = 0.0;
      for (int b = 0; b < 11; ++b) sum += acc[part * 11 + b];
      for (int b = 0; b < 11; ++b) {
        out[i][part * 11 + b] = spfh[i][part * 11 + b] + (sum > 0.0 ? 100.0 * acc[part * 11 + b] / sum : 0.0);
      }
    }
  }
  return out;
}

namespace {

using DescMatrix = Eigen::Matrix<double, Eigen::Dynamic, 33, Eigen::RowMajor>;

DescMatrix to_matrix(const std::vector<FpfhDescriptor>& d) {
  DescMatrix m(static_cast<Eigen::Index>(d.size()), 33);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (int b = 0; b < 33; ++b) m(static_cast<Eigen::Index>(i), b) = d[i][b];
  }
  return m;
}

// Nearest row of `b` for each row of `a` in descriptor space (lowest index on
// ties). Blocked so the distance matrix never materializes in full.
std::vector<std::size_t> descriptor_nn(const DescMatrix& a, const DescMatrix& b) {
  const Eigen::VectorXd nb = b.rowwise().squaredNorm();
  std::vector<std::size_t> out(static_cast<std::size_t>(a.rows()));
  constexpr Eigen::Index kBlock = 256;
  for (Eigen::Index r0 = 0; r0 < a.rows(); r0 += kBlock) {
    const Eigen::Index rows = std::min(kBlock, a.rows() - r0);
    const Eigen::MatrixXd cross = a.middleRows(r0, rows) * b.transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
      Eigen::Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < b.rows(); ++c) {
        const double d = nb(c) - 2.0 * cross(r, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      out[static_cast<std::size_t>(r0 + r)] = static_cast<std::size_t>(best);
    }
  }
  return out;
}

std::size_t count_inliers(const Sim3Transform& t, const std::vector<Point3>& src, const std::vector<Point3>& dst,
                          double threshold, std::vector<std::size_t>* which = nullptr) {
  const double t2 = threshold * threshold;
  std::size_t count = 0;
  if (which) which->clear();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (squared_distance(t.apply(src[i]), dst[i]) < t2) {
      ++count;
      if (which) which->push_back(i);
    }
  }
  return count;
}

}  // namespace

AlignmentResult global_register(const PointCloud& reference, const PointCloud& reconstructed, double voxel_size,
                                const GlobalRegistrationConfig& config) {
  reference.validate_nonempty();
  reconstructed.validate_nonempty();
  if (!(voxel_size > 0.0)) throw InvalidArgument("voxel_size must be positive");

  const PointCloud ref_ds = voxel_downsample(reference, voxel_size);
  const PointCloud rec_ds = voxel_downsample(reconstructed, voxel_size);
  if (ref_ds.size() < 3 || rec_ds.size() < 3) throw RegistrationFailed("too few points after downsampling");
  const double normal_r = config.normal_radius_factor * voxel_size;
  const double feature_r = config.feature_radius_factor * voxel_size;
  const DescMatrix ref_f = to_matrix(compute_fpfh(ref_ds, estimate_normals(ref_ds, normal_r), feature_r));
  const DescMatrix rec_f = to_matrix(compute_fpfh(rec_ds, estimate_normals(rec_ds, normal_r), feature_r));

  const auto fwd = descriptor_nn(rec_f, ref_f);
  const auto back = descriptor_nn(ref_f, rec_f);
  std::vector<Point3> src, dst;
  for (std::size_t i = 0; i < fwd.size(); ++i) {
    if (back[fwd[i]] == i) {
      src.push_back(rec_ds.points[i]);
      dst.push_back(ref_ds.points[fwd[i]]);
    }
  }
  if (src.size() < 10) {
    src.clear();
    dst.clear();
    for (std::size_t i = 0; i < fwd.size(); ++i) {
      src.push_back(rec_ds.points[i]);
      dst.push_back(ref_ds.points[fwd[i]]);
    }
  }
  const std::size_t m = src.size();
  if (m < 3) throw RegistrationFailed("fewer than 3 descriptor correspondences");

  const double threshold = config.inlier_threshold_factor * voxel_size;
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, m - 1);
  std::size_t best_count = 0;
  Sim3Transform best;
  int iterations = 0;
  long long needed = config.max_iterations;
  const double ratio = config.edge_length_ratio;
  for (; iterations < config.max_iterations && iterations < needed; ++iterations) {
    const std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
    if (a == b || b == c || a == c) continue;
    bool ok = true;
    for (const auto& [i, j] : {std::pair{a, b}, std::pair{b, c}, std::pair{a, c}}) {
      const double ls = (src[i] - src[j]).norm(), ld = (dst[i] - dst[j]).norm();
      if (ls < ratio * ld || ld < ratio * ls) ok = false;
    }
    if (!ok) continue;
    if ((src[b] - src[a]).cross(src[c] - src[a]).norm() < 1e-12) continue;
    const Sim3Transform t = fit_transform({src[a], src[b], src[c]}, {dst[a], dst[b], dst[c]});
    const std::size_t count = count_inliers(t, src, dst, threshold);
    if (count > best_count) {
      best_count = count;
      best = t;
      const double w = static_cast<double>(count) / static_cast<double>(m);
      const double p_good = w * w * w;
      if (p_good >= 1.0) {
        needed = 0;
      } else if (p_good > 0.0) {
        needed = static_cast<long long>(std::ceil(std::log(1.0 - config.confidence) / std::log(1.0 - p_good)));
      }
    }
  }

  // Refit on the consensus set until it stops growing.
  std::vector<std::size_t> inliers;
  count_inliers(best, src, dst, threshold, &inliers);
  for (int round = 0; round < 10 && inliers.size() >= 3; ++round) {
    std::vector<Point3> s, d;
    for (std::size_t i : inliers) {
      s.push_back(src[i]);
      d.push_back(dst[i]);
    }
    const Sim3Transform refit = fit_transform(s, d);
    std::vector<std::size_t> next;
    count_inliers(refit, src, dst, threshold, &next);
    if (next.size() < inliers.size()) break;
    best = refit;
    const bool same = next == inliers;
    inliers = std::move(next);
    if (same) break;
  }

  AlignmentResult result;
  result.transform = best;
  result.iterations_used = iterations;
  result.inlier_fraction = static_cast<double>(inliers.size()) / static_cast<double>(m);
  double sq = 0.0;
  for (std::size_t i : inliers) sq += squared_distance(best.apply(src[i]), dst[i]);
  result.rms_residual = inliers.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(inliers.size()));
  if (inliers.size() < 3 || result.inlier_fraction < config.min_inlier_fraction) {
    throw RegistrationFailed("RANSAC inlier fraction " + std::to_string(result.inlier_fraction) +
                             " below floor " + std::to_string(config.min_inlier_fraction));
  }
  return result;
}

// ---------------------------------------------------------------------------
// ICP

namespace {

struct Correspondences {
  std::vector<Point3> src;
  std::vector<Point3> dst;
  double rms = 0.0;
};

Correspondences match(const NearestNeighborIndex& ref_index, const PointCloud& reconstructed,
                      const Sim3Transform& t, double gate) {
  Correspondences c;
  double sq = 0.0;
  for (const auto& p : reconstructed.points) {
    const Point3 q = t.apply(p);
    const Neighbor nb = ref_index.nearest(q);
    if (nb.distance > gate) continue;
    c.src.push_back(q);
    c.dst.push_back(ref_index.point(nb.index));
    sq += nb.distance * nb.distance;
  }
  if (!c.src.empty()) c.rms = std::sqrt(sq / static_cast<double>(c.src.size()));
  return c;
}

}  // namespace

AlignmentResult icp_refine(const PointCloud& reference, const PointCloud& reconstructed, const Sim3Transform& initial,
                           const IcpConfig& config) {
  config.validate();
  reference.validate_nonempty();
  reconstructed.validate_nonempty();
  const NearestNeighborIndex index(reference);

  Sim3Transform current = initial;
  Correspondences corr = match(index, reconstructed, current, config.max_correspondence_distance);
  if (corr.src.empty()) throw NoCorrespondences("no reconstructed point within the correspondence gate");

  AlignmentResult result;
  result.rms_trace.push_back(corr.rms);
  for (int it = 1; it <= config.max_iterations; ++it) {
    result.iterations_used = it;
    const Sim3Transform step = fit_transform(corr.src, corr.dst, config.estimate_scale);
    const Sim3Transform candidate = step * current;
    Correspondences next = match(index, reconstructed, candidate, config.max_correspondence_distance);
    if (next.src.empty() || next.rms > corr.rms) break;
    const double improvement = corr.rms - next.rms;
    current = candidate;
    corr = std::move(next);
    result.rms_trace.push_back(corr.rms);
    if (improvement < config.convergence_epsilon) break;
  }
  result.transform = current;
  result.rms_residual = corr.rms;
  result.inlier_fraction = static_cast<double>(corr.src.size()) / static_cast<double>(reconstructed.size());
  return result;
}

// ---------------------------------------------------------------------------

AlignmentResult align_full(const PointCloud& reference, const PointCloud& reconstructed, const AlignConfig& config) {
  reference.validate_nonempty();
  reconstructed.validate_nonempty();
  const double diag = bounding_box(reference).diagonal();
  const Sim3Transform scaling = Sim3Transform::from_scale(estimate_scale_oriented(reference, reconstructed));
  const PointCloud scaled = scaling.apply(reconstructed);

  struct Coarse {
    Sim3Transform transform;
    double chamfer;
    std::string method;
  };
  std::vector<Coarse> candidates;
  std::string failures;
  try {
    const Sim3Transform t = pca_orient(reference, scaled, config.min_eigenvalue_ratio);
    candidates.push_back({t, chamfer_mean(reference, t.apply(scaled)), "pca"});
  } catch (const AmbiguousAxes& e) {
    failures += std::string("pca: ") + e.what() + "; ";
  }
  try {
    const AlignmentResult g = global_register(reference, scaled, config.voxel_fraction * diag, config.global);
    candidates.push_back({g.transform, chamfer_mean(reference, g.transform.apply(scaled)), "global"});
  } catch (const RegistrationFailed& e) {
    failures += std::string("global: ") + e.what();
  }
  if (candidates.empty()) throw RegistrationFailed("no coarse alignment succeeded (" + failures + ")");
  const auto best = std::min_element(candidates.begin(), candidates.end(),
                                     [](const Coarse& a, const Coarse& b) { return a.chamfer < b.chamfer; });

  IcpConfig icp;
  icp.max_iterations = config.icp_max_iterations;
  icp.convergence_epsilon = config.icp_convergence_epsilon;
  icp.max_correspondence_distance = config.max_correspondence_fraction * diag;
  icp.estimate_scale = config.icp_estimate_scale;
  AlignmentResult result = icp_refine(reference, reconstructed, best->transform * scaling, icp);
  result.coarse_method = best->method;
  return result;
}

}  // namespace reconeval
