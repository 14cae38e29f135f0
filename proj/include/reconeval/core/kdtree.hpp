#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "reconeval/core/types.hpp"

namespace reconeval {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Static kd-tree over a copy of the input points. Read-only after
/// construction; safe to query concurrently. Equal-distance ties resolve to
/// the lowest point index.
class NearestNeighborIndex {
 public:
  explicit NearestNeighborIndex(std::span<const Point3> points, std::size_t leaf_size = 8);
  explicit NearestNeighborIndex(const PointCloud& cloud)
      : NearestNeighborIndex(std::span<const Point3>(cloud.points)) {}

  std::size_t size() const { return points_.size(); }
  const Point3& point(std::size_t i) const { return points_[i]; }

  Neighbor nearest(const Point3& query) const;
  /// Up to k neighbors ordered by (distance, index).
  std::vector<Neighbor> knn(const Point3& query, std::size_t k) const;
  /// Indices within `radius` (inclusive), in increasing index order.
  std::vector<std::size_t> radius(const Point3& query, double radius) const;

 private:
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = 0;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

/// Builds the index; cloud must be non-empty.
NearestNeighborIndex build_nn_index(const PointCloud& cloud);

}  // namespace reconeval
