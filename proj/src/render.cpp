#include "reconeval/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "reconeval/error.hpp"

namespace reconeval {

void SplatConfig::validate() const {
  if (point_radius_px < 0 || point_radius_px > 32) {
    throw InvalidArgument("point_radius_px must be in [0, 32]");
  }
}

std::vector<Point3> fibonacci_directions(int n) {
  if (n < 1) throw InvalidArgument("n_views must be >= 1");
  if (n == 1) return {Point3::UnitX()};

  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Point3> dirs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * i;
    dirs[static_cast<std::size_t>(i)] = Point3(r * std::cos(phi), r * std::sin(phi), z);
  }
  // The raw spiral is off-center by O(1/n); a few project-and-recenter passes
  // remove it without visibly moving the lattice.
  for (int pass = 0; pass < 50; ++pass) {
    Point3 mean = Point3::Zero();
    for (const auto& d : dirs) mean += d;
    mean /= static_cast<double>(n);
    if (mean.norm() < 1e-12) break;
    for (auto& d : dirs) d = (d - mean).normalized();
  }
  return dirs;
}

VirtualCameraRig make_camera_rig(const PointCloud& cloud, int n_views, double radius_factor,
                                 const Intrinsics& intrinsics) {
  cloud.validate_nonempty();
  if (!(radius_factor > 0.0)) throw InvalidArgument("radius_factor must be positive");
  VirtualCameraRig rig;
  rig.target = cloud.centroid();
  double diag = bounding_box(cloud).diagonal();
  if (!(diag > 0.0)) diag = 1.0;
  rig.radius = radius_factor * diag;
  for (const auto& d : fibonacci_directions(n_views)) {
    rig.views.push_back(CameraView::look_at(rig.target + rig.radius * d, rig.target, intrinsics));
  }
  return rig;
}

bool rig_is_consistent(const VirtualCameraRig& rig, double radius_tol) {
  for (const auto& v : rig.views) {
    const Point3 to_target = rig.target - v.position;
    if (std::abs(to_target.norm() - rig.radius) > radius_tol) return false;
    if (!(v.forward().dot(to_target.normalized()) > 0.9999)) return false;
  }
  return true;
}

GrayImage render_view(const PointCloud& cloud, const CameraView& view, const SplatConfig& config) {
  view.validate();
  config.validate();
  const Intrinsics& k = view.intrinsics;
  GrayImage image(k.width, k.height, config.background);
  std::vector<double> zbuf(image.pixel_count(), std::numeric_limits<double>::infinity());
  const int r = config.point_radius_px;
  const long r2 = static_cast<long>(r) * r;

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3 pc = view.world_to_camera(cloud.points[i]);
    const double z = pc.z();
    if (!(z > 0.0)) continue;
    const double u = k.focal_px * pc.x() / z + k.cx;
    const double v = k.focal_px * pc.y() / z + k.cy;
    // Skip points whose disc cannot touch the image (also guards the casts).
    if (!(u > -r - 1.0 && u < k.width + r + 1.0 && v > -r - 1.0 && v < k.height + r + 1.0)) continue;
    const long ci = std::lround(u);
    const long cj = std::lround(v);

    std::uint8_t value = 200;
    if (cloud.intensity) {
      value = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp((*cloud.intensity)[i], 0.0, 1.0)));
    }
    const long y0 = std::max(0L, cj - r), y1 = std::min<long>(k.height - 1, cj + r);
    const long x0 = std::max(0L, ci - r), x1 = std::min<long>(k.width - 1, ci + r);
    for (long py = y0; py <= y1; ++py) {
      for (long px = x0; px <= x1; ++px) {
        if ((px - ci) * (px - ci) + (py - cj) * (py - cj) > r2) continue;
        const std::size_t idx = static_cast<std::size_t>(py) * static_cast<std::size_t>(k.width) +
                                static_cast<std::size_t>(px);
        if (config.depth_test) {
          if (!(z < zbuf[idx])) continue;
          zbuf[idx] = z;
        }
        image.data[idx] = value;
      }
    }
  }
  return image;
}

std::vector<std::pair<GrayImage, GrayImage>> render_pair(const PointCloud& reference,
                                                         const PointCloud& reconstructed_aligned,
                                                         const VirtualCameraRig& rig,
                                                         const SplatConfig& config) {
  std::vector<std::pair<GrayImage, GrayImage>> out;
  out.reserve(rig.views.size());
  for (const auto& view : rig.views) {
    out.emplace_back(render_view(reference, view, config), render_view(reconstructed_aligned, view, config));
  }
  return out;
}

}  // namespace reconeval
