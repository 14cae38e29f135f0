#pragma once

// Shared generators and brute-force oracles for the test suites. Oracles here
// deliberately avoid the library's index/solver code paths.

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <unistd.h>
#include <string>
#include <vector>

#include "reconeval/core/types.hpp"
#include "reconeval/render.hpp"

namespace reconeval::testing {

inline PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  PointCloud c;
  c.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

inline Matrix3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Matrix3 rotation_about(const Point3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

/// Angle of the relative rotation a^T b, in radians.
inline double rotation_angle_between(const Matrix3& a, const Matrix3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

/// Anisotropic blob with distinct principal axes and no symmetry.
inline PointCloud elongated_cloud(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    double x = 1.0 * g(rng), y = 0.45 * g(rng), z = 0.18 * g(rng);
    // Skew so no sign flip of an axis maps the cloud onto itself.
    x += 0.4 * y * y + 0.25 * z;
    y += 0.3 * std::abs(z) + (u(rng) < 0.2 ? 0.3 : 0.0);
    c.points.emplace_back(x, y, z);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Brute-force oracles

inline double brute_nn_distance(const Point3& p, const std::vector<Point3>& cloud) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : cloud) {
    const double dx = p.x() - q.x(), dy = p.y() - q.y(), dz = p.z() - q.z();
    best = std::min(best, dx * dx + dy * dy + dz * dz);
  }
  return std::sqrt(best);
}

inline std::size_t brute_nn_index(const Point3& p, const std::vector<Point3>& cloud) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t idx = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& q = cloud[i];
    const double dx = p.x() - q.x(), dy = p.y() - q.y(), dz = p.z() - q.z();
    const double d2 = dx * dx + dy * dy + dz * dz;
    if (d2 < best) {
      best = d2;
      idx = i;
    }
  }
  return idx;
}

inline double brute_directed_hausdorff(const PointCloud& a, const PointCloud& b) {
  double h = 0.0;
  for (const auto& p : a.points) h = std::max(h, brute_nn_distance(p, b.points));
  return h;
}

inline double brute_hausdorff(const PointCloud& a, const PointCloud& b) {
  return std::max(brute_directed_hausdorff(a, b), brute_directed_hausdorff(b, a));
}

inline double brute_chamfer_mean(const PointCloud& a, const PointCloud& b) {
  double sa = 0.0, sb = 0.0;
  for (const auto& p : a.points) sa += brute_nn_distance(p, b.points);
  for (const auto& p : b.points) sb += brute_nn_distance(p, a.points);
  return 0.5 * (sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size()));
}

/// Exact W1 between equal-size uniform clouds by enumerating permutations.
inline double brute_wasserstein_permutations(const PointCloud& a, const PointCloud& b) {
  std::vector<int> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) cost += (a.points[i] - b.points[perm[i]]).norm();
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(a.size());
}

// Per-pixel scan over all points: pick the nearest covering splat, lowest index
// on ties. Independent of the renderer's point-major loop.
inline GrayImage oracle_render(const PointCloud& cloud, const CameraView& view, const SplatConfig& cfg) {
  const auto& k = view.intrinsics;
  GrayImage img(k.width, k.height, cfg.background);
  for (int py = 0; py < k.height; ++py) {
    for (int px = 0; px < k.width; ++px) {
      double best_z = std::numeric_limits<double>::infinity();
      int best = -1;
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point3 c = view.orientation.transpose() * (cloud.points[i] - view.position);
        if (c.z() <= 0) continue;
        const double u = k.focal_px * c.x() / c.z() + k.cx;
        const double v = k.focal_px * c.y() / c.z() + k.cy;
        const double du = px - std::round(u), dv = py - std::round(v);
        if (du * du + dv * dv > cfg.point_radius_px * cfg.point_radius_px) continue;
        if (c.z() < best_z) {
          best_z = c.z();
          best = static_cast<int>(i);
        }
      }
      if (best >= 0) {
        img.at(px, py) = cloud.intensity
                             ? static_cast<std::uint8_t>(std::lround(255.0 * (*cloud.intensity)[best]))
                             : 200;
      }
    }
  }
  return img;
}

/// Low-contrast frame of overlapping rectangles and blobs, intensities within
/// about +-contrast of mid-gray.
inline GrayImage textured_frame(std::uint64_t seed, int w = 160, int h = 120, int contrast = 18) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1), size(4, 22), level(-contrast, contrast);
  std::vector<int> v(static_cast<std::size_t>(w) * h, 120);
  for (int k = 0; k < 90; ++k) {
    const int x0 = ux(rng), y0 = uy(rng), sw = size(rng), sh = size(rng), d = level(rng);
    const bool disc = k % 3 == 0;
    for (int y = y0; y < std::min(h, y0 + sh); ++y) {
      for (int x = x0; x < std::min(w, x0 + sw); ++x) {
        if (disc) {
          const double cx = x0 + sw / 2.0, cy = y0 + sh / 2.0;
          if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > sw * sh / 4.0) continue;
        }
        v[static_cast<std::size_t>(y) * w + x] += d;
      }
    }
  }
  GrayImage img(w, h);
  for (std::size_t i = 0; i < v.size(); ++i) img.data[i] = static_cast<std::uint8_t>(std::clamp(v[i], 0, 255));
  return img;
}

/// Integer shift with edge replication for uncovered pixels.
inline GrayImage shift_image(const GrayImage& img, int dx, int dy) {
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      out.at(x, y) = img.at(std::clamp(x - dx, 0, img.width - 1), std::clamp(y - dy, 0, img.height - 1));
    }
  }
  return out;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("reconeval_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace reconeval::testing
