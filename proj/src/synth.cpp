#include "reconeval/synth.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "reconeval/core/kdtree.hpp"
#include "reconeval/error.hpp"

namespace reconeval {

namespace {

constexpr double kFaceIntensity = 0.8;
constexpr double kEngravingIntensity = 0.5;

// Rectangle origin + a*u + b*v for a, b in [0, 1].
struct Patch {
  Point3 origin;
  Point3 u;
  Point3 v;
  double intensity;
  double area() const { return u.cross(v).norm(); }
};

std::size_t sample_count(double area, double density) {
  return static_cast<std::size_t>(std::llround(area * density));
}

void sample_patch(const Patch& patch, std::size_t count, std::mt19937_64& rng,
                  std::vector<Point3>& points, std::vector<double>& intensity) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    const double a = unit(rng), b = unit(rng);
    points.push_back(patch.origin + a * patch.u + b * patch.v);
    intensity.push_back(patch.intensity);
  }
}

bool in_engraving(const std::vector<Engraving>& slots, double x, double z) {
  for (const auto& s : slots) {
    if (x > s.x_min && x < s.x_max && z > s.z_min && z < s.z_max) return true;
  }
  return false;
}

// Every face of the engraved block except the +y face, which has openings and
// is sampled separately.
std::vector<Patch> solid_patches(const SceneSpec& spec) {
  const Point3 h = 0.5 * spec.object_extents;
  const double ex = spec.object_extents.x(), ey = spec.object_extents.y(), ez = spec.object_extents.z();
  std::vector<Patch> p;
  p.push_back({Point3(-h.x(), -h.y(), -h.z()), Point3(ex, 0, 0), Point3(0, 0, ez), kFaceIntensity});  // -y
  p.push_back({Point3(-h.x(), -h.y(), -h.z()), Point3(ex, 0, 0), Point3(0, ey, 0), kFaceIntensity});  // -z
  p.push_back({Point3(-h.x(), -h.y(), h.z()), Point3(ex, 0, 0), Point3(0, ey, 0), kFaceIntensity});   // +z
  p.push_back({Point3(-h.x(), -h.y(), -h.z()), Point3(0, ey, 0), Point3(0, 0, ez), kFaceIntensity});  // -x
  p.push_back({Point3(h.x(), -h.y(), -h.z()), Point3(0, ey, 0), Point3(0, 0, ez), kFaceIntensity});   // +x

  const double d = spec.engraving_depth;
  const double floor_y = h.y() - d;
  for (const auto& s : engraving_layout(spec)) {
    const double w = s.x_max - s.x_min, t = s.z_max - s.z_min;
    p.push_back({Point3(s.x_min, floor_y, s.z_min), Point3(w, 0, 0), Point3(0, 0, t), kEngravingIntensity});
    p.push_back({Point3(s.x_min, floor_y, s.z_min), Point3(0, d, 0), Point3(0, 0, t), kEngravingIntensity});
    p.push_back({Point3(s.x_max, floor_y, s.z_min), Point3(0, d, 0), Point3(0, 0, t), kEngravingIntensity});
    p.push_back({Point3(s.x_min, floor_y, s.z_min), Point3(w, 0, 0), Point3(0, d, 0), kEngravingIntensity});
    p.push_back({Point3(s.x_min, floor_y, s.z_max), Point3(w, 0, 0), Point3(0, d, 0), kEngravingIntensity});
  }
  return p;
}

double front_open_area(const SceneSpec& spec) {
  double area = spec.object_extents.x() * spec.object_extents.z();
  for (const auto& s : engraving_layout(spec)) area -= (s.x_max - s.x_min) * (s.z_max - s.z_min);
  return area;
}

}  // namespace

void SceneSpec::validate() const {
  if (!(object_extents.minCoeff() > 0.0) || !object_extents.allFinite()) {
    throw InvalidArgument("object extents must be positive");
  }
  if (!(engraving_depth > 0.0) || !(engraving_depth < object_extents.minCoeff())) {
    throw InvalidArgument("engraving depth must be positive and below the smallest extent");
  }
  if (!(surface_sample_density > 0.0) || !std::isfinite(surface_sample_density)) {
    throw InvalidArgument("surface sample density must be positive");
  }
}

void DegradeSpec::validate() const {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw InvalidArgument("noise_sigma must be >= 0");
  if (!(dropout_fraction >= 0.0 && dropout_fraction < 1.0)) throw InvalidArgument("dropout_fraction must be in [0,1)");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) throw InvalidArgument("outlier_fraction must be in [0,1)");
  if (!(outlier_scale >= 0.0) || !std::isfinite(outlier_scale)) throw InvalidArgument("outlier_scale must be >= 0");
}

void PoseNoiseSpec::validate() const {
  if (!(position_sigma >= 0.0) || !(yaw_sigma >= 0.0) || !std::isfinite(position_sigma) ||
      !std::isfinite(yaw_sigma)) {
    throw InvalidArgument("pose noise sigmas must be finite and >= 0");
  }
}

std::vector<Engraving> engraving_layout(const SceneSpec& spec) {
  // (x center, width) as fractions of the length, (z center, height) as
  // fractions of the height. Uneven on purpose so the block has no rotational
  // self-symmetry.
  static constexpr double kSlots[5][4] = {
      {-0.36, 0.10, 0.00, 0.60}, {-0.18, 0.14, 0.05, 0.55}, {0.00, 0.09, -0.05, 0.65},
      {0.17, 0.12, 0.02, 0.50},  {0.35, 0.11, -0.03, 0.58},
  };
  const double ex = spec.object_extents.x(), ez = spec.object_extents.z();
  std::vector<Engraving> out;
  for (const auto& s : kSlots) {
    out.push_back({(s[0] - 0.5 * s[1]) * ex, (s[0] + 0.5 * s[1]) * ex, (s[2] - 0.5 * s[3]) * ez,
                   (s[2] + 0.5 * s[3]) * ez});
  }
  return out;
}

double reference_surface_area(const SceneSpec& spec) {
  double area = front_open_area(spec);
  for (const auto& p : solid_patches(spec)) area += p.area();
  return area;
}

PointCloud generate_reference(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<Point3> pts;
  std::vector<double> inten;

  // +y face with the openings cut out, by rejection.
  const Point3 h = 0.5 * spec.object_extents;
  const auto slots = engraving_layout(spec);
  const std::size_t front = sample_count(front_open_area(spec), spec.surface_sample_density);
  std::uniform_real_distribution<double> ux(-h.x(), h.x()), uz(-h.z(), h.z());
  while (pts.size() < front) {
    const double x = ux(rng), z = uz(rng);
    if (in_engraving(slots, x, z)) continue;
    pts.emplace_back(x, h.y(), z);
    inten.push_back(kFaceIntensity);
  }
  for (const auto& patch : solid_patches(spec)) {
    sample_patch(patch, sample_count(patch.area(), spec.surface_sample_density), rng, pts, inten);
  }

  PointCloud out(std::move(pts));
  out.intensity = std::move(inten);
  return out;
}

PointCloud degrade(const PointCloud& cloud, const DegradeSpec& spec) {
  spec.validate();
  cloud.validate();
  if (cloud.empty()) return cloud;
  std::mt19937_64 rng(spec.seed);
  const std::size_t n = cloud.size();

  std::vector<std::size_t> keep(n);
  std::iota(keep.begin(), keep.end(), 0);
  if (spec.dropout_fraction > 0.0) {
    const auto k = static_cast<std::size_t>(std::ceil((1.0 - spec.dropout_fraction) * static_cast<double>(n)));
    std::shuffle(keep.begin(), keep.end(), rng);
    keep.resize(std::min(n, k));
    std::sort(keep.begin(), keep.end());
  }

  PointCloud out;
  out.points.reserve(keep.size());
  for (std::size_t i : keep) out.points.push_back(cloud.points[i]);
  if (cloud.intensity) {
    std::vector<double> inten;
    inten.reserve(keep.size());
    for (std::size_t i : keep) inten.push_back((*cloud.intensity)[i]);
    out.intensity = std::move(inten);
  }

  if (spec.noise_sigma > 0.0) {
    std::normal_distribution<double> g(0.0, spec.noise_sigma);
    for (auto& p : out.points) {
      const double dx = g(rng), dy = g(rng), dz = g(rng);
      p += Point3(dx, dy, dz);
    }
  }

  if (spec.outlier_fraction > 0.0) {
    const auto m = static_cast<std::size_t>(std::llround(spec.outlier_fraction * static_cast<double>(out.size())));
    const AxisAlignedBox box = bounding_box(cloud).dilated(spec.outlier_scale);
    std::vector<std::size_t> idx(out.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Point3 ext = box.extents();
    for (std::size_t j = 0; j < m; ++j) {
      const double a = unit(rng), b = unit(rng), c = unit(rng);
      out.points[idx[j]] = box.min_corner + Point3(a * ext.x(), b * ext.y(), c * ext.z());
    }
  }
  return out;
}

double mean_point_spacing(const PointCloud& cloud) {
  if (cloud.size() < 2) return 0.0;
  const NearestNeighborIndex index(cloud);
  double sum = 0.0;
  for (const auto& p : cloud.points) sum += index.knn(p, 2)[1].distance;
  return sum / static_cast<double>(cloud.size());
}

void ProtrusionSpec::validate() const {
  if (!(std::isfinite(protrusion) && protrusion >= 0.0)) throw InvalidArgument("protrusion must be >= 0");
  if (!(std::isfinite(footprint) && footprint > 0.0)) throw InvalidArgument("protrusion footprint must be > 0");
  if (!(std::isfinite(embed_depth) && embed_depth >= 0.0)) throw InvalidArgument("embed_depth must be >= 0");
  if (!std::isfinite(x_center) || !std::isfinite(z_center)) throw InvalidArgument("protrusion center must be finite");
}

AnomalyBox protrusion_box(const SceneSpec& scene, const ProtrusionSpec& spec) {
  scene.validate();
  spec.validate();
  if (spec.embed_depth >= scene.object_extents.y()) throw InvalidArgument("embed_depth exceeds the block depth");
  const double face_y = -0.5 * scene.object_extents.y();
  const double y_lo = face_y - spec.protrusion, y_hi = face_y + spec.embed_depth;
  return {Point3(spec.x_center, 0.5 * (y_lo + y_hi), spec.z_center),
          Point3(spec.footprint, y_hi - y_lo, spec.footprint)};
}

PointCloud inject_anomaly(const PointCloud& cloud, const Point3& box_center, const Point3& box_extents,
                          std::uint64_t seed) {
  cloud.validate_nonempty();
  if (!box_center.allFinite() || !box_extents.allFinite() || !(box_extents.minCoeff() >= 0.0)) {
    throw InvalidArgument("anomaly box must have finite center and non-negative extents");
  }
  const AxisAlignedBox box{box_center - 0.5 * box_extents, box_center + 0.5 * box_extents};
  if (!box.intersects(bounding_box(cloud))) throw BoxDisjoint("anomaly box does not intersect the cloud");

  PointCloud out;
  std::vector<double> inten;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (box.contains(cloud.points[i])) continue;
    out.points.push_back(cloud.points[i]);
    if (cloud.intensity) inten.push_back((*cloud.intensity)[i]);
  }

  // Uniform sampling at density rho has mean NN spacing ~ 0.5 / sqrt(rho).
  const double spacing = mean_point_spacing(cloud);
  const double density = spacing > 0.0 ? 0.25 / (spacing * spacing) : 0.0;
  std::mt19937_64 rng(seed);
  std::vector<Point3> added;
  std::vector<double> added_inten;
  const Point3& lo = box.min_corner;
  if (box_extents.maxCoeff() == 0.0) {
    added.push_back(box_center);
    added_inten.push_back(kFaceIntensity);
  } else {
    for (int axis = 0; axis < 3; ++axis) {
      const int a = (axis + 1) % 3, b = (axis + 2) % 3;
      Point3 u = Point3::Zero(), v = Point3::Zero();
      u[a] = box_extents[a];
      v[b] = box_extents[b];
      const double area = box_extents[a] * box_extents[b];
      if (area == 0.0) continue;
      const std::size_t count = std::max<std::size_t>(1, sample_count(area, density));
      Point3 far = lo;
      far[axis] += box_extents[axis];
      sample_patch({lo, u, v, kFaceIntensity}, count, rng, added, added_inten);
      if (box_extents[axis] > 0.0) sample_patch({far, u, v, kFaceIntensity}, count, rng, added, added_inten);
    }
  }
  out.points.insert(out.points.end(), added.begin(), added.end());
  if (cloud.intensity) {
    inten.insert(inten.end(), added_inten.begin(), added_inten.end());
    out.intensity = std::move(inten);
  }
  return out;
}

VirtualCameraRig noisy_poses(const VirtualCameraRig& rig, const PoseNoiseSpec& spec) {
  spec.validate();
  if (spec.position_sigma == 0.0 && spec.yaw_sigma == 0.0) return rig;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> yaw(0.0, 1.0), pos(0.0, 1.0);
  VirtualCameraRig out = rig;
  for (auto& view : out.views) {
    Point3 offset = view.position - rig.target;
    const double angle = spec.yaw_sigma * yaw(rng);
    offset = Eigen::AngleAxisd(angle, Point3::UnitZ()) * offset;
    const double dx = pos(rng), dy = pos(rng), dz = pos(rng);
    offset += spec.position_sigma * Point3(dx, dy, dz);
    view = CameraView::look_at(rig.target + offset, rig.target, view.intrinsics);
  }
  return out;
}

}  // namespace reconeval
