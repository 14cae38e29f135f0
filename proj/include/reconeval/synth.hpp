#pragma once

#include <cstdint>
#include <vector>

#include "reconeval/core/types.hpp"
#include "reconeval/render.hpp"

namespace reconeval {

struct SceneSpec {
  Point3 object_extents{0.547, 0.203, 0.209};
  double engraving_depth = 0.04;
  /// Points per square meter; the default gives roughly 20k points.
  double surface_sample_density = 32700.0;
  std::uint64_t seed = 42;
  void validate() const;
};

struct DegradeSpec {
  double noise_sigma = 0.0;
  double dropout_fraction = 0.0;
  double outlier_fraction = 0.0;
  double outlier_scale = 0.0;
  std::uint64_t seed = 42;
  void validate() const;
};

struct PoseNoiseSpec {
  double position_sigma = 0.057735026918962584;  // 0.10 / sqrt(3)
  double yaw_sigma = 0.0;
  std::uint64_t seed = 42;
  void validate() const;
};

/// Axis-aligned recess cut into the +y face, in object coordinates.
struct Engraving {
  double x_min, x_max, z_min, z_max;
};

/// Recess layout for a spec (five letter-like slots, deliberately asymmetric).
std::vector<Engraving> engraving_layout(const SceneSpec& spec);

/// Total sampled area of the engraved block (outer faces minus openings plus
/// recess walls and floors).
double reference_surface_area(const SceneSpec& spec);

PointCloud generate_reference(const SceneSpec& spec = {});

PointCloud degrade(const PointCloud& cloud, const DegradeSpec& spec);

/// Mean nearest-neighbor distance within a cloud (0 for fewer than 2 points).
double mean_point_spacing(const PointCloud& cloud);

/// Replaces everything inside the box by samples of the box surface, at a
/// density matching the input cloud. New points get intensity 0.8 when the
/// input carries intensity.
PointCloud inject_anomaly(const PointCloud& cloud, const Point3& box_center,
                          const Point3& box_extents, std::uint64_t seed = 42);

/// Box standing on the plain -y face of the block, the stand-in for an
/// occluding object placed against it.
struct ProtrusionSpec {
  /// Height above the face.
  double protrusion = 0.04;
  /// Side length along x and z.
  double footprint = 0.1;
  /// How far the box sinks into the block, so the face under it is cut away.
  double embed_depth = 0.005;
  /// Footprint center along x and z, object coordinates.
  double x_center = 0.1;
  double z_center = 0.0;
  void validate() const;
};

struct AnomalyBox {
  Point3 center;
  Point3 extents;
};

AnomalyBox protrusion_box(const SceneSpec& scene, const ProtrusionSpec& spec);

/// Orbits each camera by a yaw jitter about the vertical axis through the
/// target, adds isotropic position noise, then re-aims at the target.
VirtualCameraRig noisy_poses(const VirtualCameraRig& rig, const PoseNoiseSpec& spec);

}  // namespace reconeval
