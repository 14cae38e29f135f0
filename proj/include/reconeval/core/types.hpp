#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace reconeval {

using Point3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

/// Squared Euclidean distance, written out so every caller (including the
/// brute-force test oracles) rounds identically.
inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// Ordered 3D points in meters with an optional per-point intensity in [0,1].
struct PointCloud {
  std::vector<Point3> points;
  std::optional<std::vector<double>> intensity;

  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> pts,
                      std::optional<std::vector<double>> inten = std::nullopt)
      : points(std::move(pts)), intensity(std::move(inten)) {}

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_intensity() const { return intensity.has_value(); }

  /// Throws InvalidArgument on non-finite coordinates, intensity length
  /// mismatch or intensity outside [0,1].
  void validate() const;
  /// validate() plus EmptyCloud when there are no points.
  void validate_nonempty() const;

  Point3 centroid() const;
};

struct AxisAlignedBox {
  Point3 min_corner = Point3::Zero();
  Point3 max_corner = Point3::Zero();

  Point3 extents() const { return max_corner - min_corner; }
  double diagonal() const { return extents().norm(); }
  Point3 center() const { return 0.5 * (min_corner + max_corner); }
  bool contains(const Point3& p) const {
    return (p.array() >= min_corner.array()).all() &&
           (p.array() <= max_corner.array()).all();
  }
  bool intersects(const AxisAlignedBox& other) const {
    return (min_corner.array() <= other.max_corner.array()).all() &&
           (other.min_corner.array() <= max_corner.array()).all();
  }
  AxisAlignedBox dilated(double margin) const {
    return {(min_corner.array() - margin).matrix(),
            (max_corner.array() + margin).matrix()};
  }
};

/// Minimal axis-aligned box containing every point. Cloud must be non-empty.
AxisAlignedBox bounding_box(const PointCloud& cloud);
AxisAlignedBox bounding_box(std::span<const Point3> points);

/// Similarity transform x -> scale * R * x + t.
class Sim3Transform {
 public:
  Sim3Transform() = default;
  /// Throws InvalidArgument unless scale > 0 and R is a proper rotation.
  Sim3Transform(double scale, const Matrix3& rotation, const Point3& translation);

  static Sim3Transform identity() { return {}; }
  static Sim3Transform from_scale(double s) {
    return {s, Matrix3::Identity(), Point3::Zero()};
  }
  static Sim3Transform from_rotation(const Matrix3& r) {
    return {1.0, r, Point3::Zero()};
  }
  static Sim3Transform from_translation(const Point3& t) {
    return {1.0, Matrix3::Identity(), t};
  }

  double scale() const { return scale_; }
  const Matrix3& rotation() const { return rotation_; }
  const Point3& translation() const { return translation_; }

  Point3 apply(const Point3& p) const {
    return scale_ * (rotation_ * p) + translation_;
  }
  PointCloud apply(const PointCloud& cloud) const;

  /// (*this) after `rhs`: (a * b)(x) = a(b(x)).
  Sim3Transform operator*(const Sim3Transform& rhs) const;
  Sim3Transform inverse() const;

 private:
  double scale_ = 1.0;
  Matrix3 rotation_ = Matrix3::Identity();
  Point3 translation_ = Point3::Zero();
};

/// True when R^T R = I and det(R) = +1 within `tol`.
bool is_rotation(const Matrix3& r, double tol = 1e-9);
/// Projects an almost-rotation back onto SO(3) via SVD.
Matrix3 nearest_rotation(const Matrix3& m);

struct Intrinsics {
  double focal_px = 320.0;
  double cx = 160.0;
  double cy = 160.0;
  int width = 320;
  int height = 320;
};

/// Pinhole camera. `orientation` is camera-to-world with columns
/// (right, down, forward), i.e. x right, y down, z along the optical axis.
struct CameraView {
  Point3 position = Point3::Zero();
  Matrix3 orientation = Matrix3::Identity();
  Intrinsics intrinsics;

  Point3 forward() const { return orientation.col(2); }
  Point3 world_to_camera(const Point3& p) const {
    return orientation.transpose() * (p - position);
  }
  void validate() const;

  /// Camera at `position` whose optical axis passes through `target`. Up is
  /// world +z unless the view is within ~2.6 deg of vertical, then world +x.
  static CameraView look_at(const Point3& position, const Point3& target,
                            const Intrinsics& intrinsics);
};

/// Row-major 8-bit grayscale raster.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0);
  GrayImage(int w, int h, std::vector<std::uint8_t> pixels);

  std::uint8_t at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int x, int y) {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t pixel_count() const { return data.size(); }
  bool same_size(const GrayImage& o) const {
    return width == o.width && height == o.height;
  }
  bool operator==(const GrayImage&) const = default;
};

}  // namespace reconeval
