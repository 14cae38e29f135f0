#include "reconeval/core/types.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "reconeval/error.hpp"

namespace reconeval {

void PointCloud::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw InvalidArgument("point " + std::to_string(i) + " has non-finite coordinates");
    }
  }
  if (intensity) {
    if (intensity->size() != points.size()) {
      throw InvalidArgument("intensity length " + std::to_string(intensity->size()) +
                            " != point count " + std::to_string(points.size()));
    }
    for (double v : *intensity) {
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("intensity outside [0,1]");
    }
  }
}

void PointCloud::validate_nonempty() const {
  if (points.empty()) throw EmptyCloud("point cloud has no points");
  validate();
}

Point3 PointCloud::centroid() const {
  Point3 c = Point3::Zero();
  for (const auto& p : points) c += p;
  return points.empty() ? c : Point3(c / static_cast<double>(points.size()));
}

AxisAlignedBox bounding_box(std::span<const Point3> points) {
  if (points.empty()) throw EmptyCloud("bounding box of empty point set");
  AxisAlignedBox box{points.front(), points.front()};
  for (const auto& p : points) {
    box.min_corner = box.min_corner.cwiseMin(p);
    box.max_corner = box.max_corner.cwiseMax(p);
  }
  return box;
}

AxisAlignedBox bounding_box(const PointCloud& cloud) {
  return bounding_box(std::span<const Point3>(cloud.points));
}

bool is_rotation(const Matrix3& r, double tol) {
  if (!r.allFinite()) return false;
  const Matrix3 err = r.transpose() * r - Matrix3::Identity();
  return err.cwiseAbs().maxCoeff() < tol && std::abs(r.determinant() - 1.0) < tol;
}

Matrix3 nearest_rotation(const Matrix3& m) {
  Eigen::JacobiSVD<Matrix3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 d = Matrix3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

Sim3Transform::Sim3Transform(double scale, const Matrix3& rotation,
                             const Point3& translation)
    : scale_(scale), rotation_(rotation), translation_(translation) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw InvalidArgument("Sim3 scale must be positive and finite");
  }
  if (!is_rotation(rotation)) throw InvalidArgument("Sim3 rotation is not a proper rotation");
  if (!translation.allFinite()) throw InvalidArgument("Sim3 translation is not finite");
}

PointCloud Sim3Transform::apply(const PointCloud& cloud) const {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(apply(p));
  out.intensity = cloud.intensity;
  return out;
}

Sim3Transform Sim3Transform::operator*(const Sim3Transform& rhs) const {
  Sim3Transform out;
  out.scale_ = scale_ * rhs.scale_;
  out.rotation_ = rotation_ * rhs.rotation_;
  out.translation_ = scale_ * (rotation_ * rhs.translation_) + translation_;
  return out;
}

Sim3Transform Sim3Transform::inverse() const {
  Sim3Transform out;
  out.scale_ = 1.0 / scale_;
  out.rotation_ = rotation_.transpose();
  out.translation_ = -(out.scale_ * (out.rotation_ * translation_));
  return out;
}

void CameraView::validate() const {
  if (!is_rotation(orientation, 1e-6)) throw InvalidArgument("camera orientation is not a rotation");
  if (intrinsics.width < 1 || intrinsics.height < 1) throw InvalidArgument("camera image size must be >= 1");
  if (!(intrinsics.focal_px > 0.0)) throw InvalidArgument("camera focal length must be positive");
  if (!position.allFinite()) throw InvalidArgument("camera position is not finite");
}

CameraView CameraView::look_at(const Point3& position, const Point3& target,
                               const Intrinsics& intrinsics) {
  const Point3 delta = target - position;
  if (!(delta.norm() > 0.0)) throw InvalidArgument("look_at: camera coincides with target");
  const Point3 forward = delta.normalized();
  Point3 up = Point3::UnitZ();
  if (std::abs(forward.dot(up)) > 0.999) up = Point3::UnitX();
  const Point3 right = forward.cross(up).normalized();
  const Point3 down = forward.cross(right);
  CameraView view;
  view.position = position;
  view.orientation.col(0) = right;
  view.orientation.col(1) = down;
  view.orientation.col(2) = forward;
  view.intrinsics = intrinsics;
  return view;
}

GrayImage::GrayImage(int w, int h, std::uint8_t fill) : width(w), height(h) {
  if (w < 0 || h < 0) throw InvalidArgument("negative image size");
  data.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
}

GrayImage::GrayImage(int w, int h, std::vector<std::uint8_t> pixels)
    : width(w), height(h), data(std::move(pixels)) {
  if (w < 0 || h < 0 || data.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {
    throw InvalidArgument("image data length does not match width*height");
  }
}

}  // namespace reconeval
