#include "reconeval/core/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "reconeval/error.hpp"

namespace reconeval {

namespace {

bool closer(double d2a, std::size_t ia, double d2b, std::size_t ib) {
  return d2a < d2b || (d2a == d2b && ia < ib);
}

}  // namespace

NearestNeighborIndex::NearestNeighborIndex(std::span<const Point3> points, std::size_t leaf_size)
    : points_(points.begin(), points.end()), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
  if (points_.empty()) throw EmptyCloud("cannot index an empty point set");
  if (points_.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("point set too large for index");
  }
  order_.resize(points_.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
  build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t NearestNeighborIndex::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_) return id;

  Point3 lo = points_[order_[begin]];
  Point3 hi = lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide

  const std::uint32_t mid = begin + (end - begin) / 2;
  auto first = order_.begin() + begin;
  std::nth_element(first, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double pa = points_[a][axis];
                     const double pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  const double split = points_[order_[mid]][axis];
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  Node& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

Neighbor NearestNeighborIndex::nearest(const Point3& query) const {
  double best_d2 = std::numeric_limits<double>::infinity();
  std::size_t best = std::numeric_limits<std::size_t>::max();

  // Explicit stack of (node, lower bound on squared distance to its region).
  std::vector<std::pair<std::int32_t, double>> stack;
  stack.reserve(64);
  stack.emplace_back(0, 0.0);
  while (!stack.empty()) {
    auto [id, bound] = stack.back();
    stack.pop_back();
    if (bound > best_d2) continue;
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t idx = order_[i];
        const double d2 = squared_distance(points_[idx], query);
        if (closer(d2, idx, best_d2, best)) {
          best_d2 = d2;
          best = idx;
        }
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    const double plane_d2 = diff * diff;
    const std::int32_t near_child = diff < 0 ? node.left : node.right;
    const std::int32_t far_child = diff < 0 ? node.right : node.left;
    stack.emplace_back(far_child, std::max(bound, plane_d2));
    stack.emplace_back(near_child, bound);
  }
  return {best, std::sqrt(best_d2)};
}

std::vector<Neighbor> NearestNeighborIndex::knn(const Point3& query, std::size_t k) const {
  k = std::min(k, points_.size());
  if (k == 0) return {};
  struct Entry {
    double d2;
    std::size_t idx;
    bool operator<(const Entry& o) const { return closer(d2, idx, o.d2, o.idx); }
  };
  std::priority_queue<Entry> heap;  // top = current worst
  auto worst = [&]() {
    return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.top().d2;
  };

  std::vector<std::pair<std::int32_t, double>> stack;
  stack.emplace_back(0, 0.0);
  while (!stack.empty()) {
    auto [id, bound] = stack.back();
    stack.pop_back();
    if (bound > worst()) continue;
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t idx = order_[i];
        Entry e{squared_distance(points_[idx], query), idx};
        if (heap.size() < k) {
          heap.push(e);
        } else if (e < heap.top()) {
          heap.pop();
          heap.push(e);
        }
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    const std::int32_t near_child = diff < 0 ? node.left : node.right;
    const std::int32_t far_child = diff < 0 ? node.right : node.left;
    stack.emplace_back(far_child, std::max(bound, diff * diff));
    stack.emplace_back(near_child, bound);
  }
  std::vector<Neighbor> out(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = {heap.top().idx, std::sqrt(heap.top().d2)};
    heap.pop();
  }
  return out;
}

std::vector<std::size_t> NearestNeighborIndex::radius(const Point3& query, double radius) const {
  std::vector<std::size_t> out;
  if (!(radius >= 0.0)) return out;
  const double r2 = radius * radius;
  std::vector<std::pair<std::int32_t, double>> stack;
  stack.emplace_back(0, 0.0);
  while (!stack.empty()) {
    auto [id, bound] = stack.back();
    stack.pop_back();
    if (bound > r2) continue;
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t idx = order_[i];
        if (squared_distance(points_[idx], query) <= r2) out.push_back(idx);
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    const std::int32_t near_child = diff < 0 ? node.left : node.right;
    const std::int32_t far_child = diff < 0 ? node.right : node.left;
    stack.emplace_back(far_child, std::max(bound, diff * diff));
    stack.emplace_back(near_child, bound);
  }
  std::sort(out.begin(), out.end());
  return out;
}

NearestNeighborIndex build_nn_index(const PointCloud& cloud) {
  if (cloud.empty()) throw EmptyCloud("cannot index an empty cloud");
  return NearestNeighborIndex(cloud);
}

}  // namespace reconeval
