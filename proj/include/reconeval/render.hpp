#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "reconeval/core/types.hpp"

namespace reconeval {

struct VirtualCameraRig {
  std::vector<CameraView> views;
  Point3 target = Point3::Zero();
  double radius = 0.0;
};

struct SplatConfig {
  int point_radius_px = 1;
  std::uint8_t background = 0;
  bool depth_test = true;
  void validate() const;
};

// Unit directions on a Fibonacci-sphere lattice, recentered so their mean is
// zero to machine precision.
std::vector<Point3> fibonacci_directions(int n);

VirtualCameraRig make_camera_rig(const PointCloud& cloud, int n_views = 32,
                                 double radius_factor = 2.0, const Intrinsics& intrinsics = {});

// Every view aims at the target within 1e-4 and sits at the rig radius.
bool rig_is_consistent(const VirtualCameraRig& rig, double radius_tol = 1e-9);

GrayImage render_view(const PointCloud& cloud, const CameraView& view,
                      const SplatConfig& config = {});

std::vector<std::pair<GrayImage, GrayImage>> render_pair(const PointCloud& reference,
                                                         const PointCloud& reconstructed_aligned,
                                                         const VirtualCameraRig& rig,
                                                         const SplatConfig& config = {});

}  // namespace reconeval
