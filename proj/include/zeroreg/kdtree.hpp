#pragma once

#include "zeroreg/types.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace zeroreg {

/// Static 3D KD-tree over a borrowed point array. Immutable after
/// construction, so concurrent queries are safe. The indexed points must
/// outlive the index.
class SpatialIndex {
 public:
  SpatialIndex() = default;

  explicit SpatialIndex(const std::vector<Point3>& points, int leaf_size = 16)
      : points_(&points), leaf_size_(std::max(1, leaf_size)) {
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (!order_.empty()) {
      nodes_.reserve(2 * order_.size() / leaf_size_ + 1);
      build(0, static_cast<std::uint32_t>(order_.size()));
    }
  }

  explicit SpatialIndex(const PointCloud& cloud, int leaf_size = 16) : SpatialIndex(cloud.points, leaf_size) {}

  std::size_t size() const noexcept { return order_.size(); }

  /// Indices of all points with ||p - query|| <= radius, ascending.
  std::vector<std::uint32_t> radius_search(const Point3& query, double radius) const {
    std::vector<std::uint32_t> out;
    if (nodes_.empty() || radius < 0.0) return out;
    visit(0, query, radius * radius, [&](std::uint32_t i) { out.push_back(i); });
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Number of points with ||p - query|| <= radius.
  std::size_t radius_count(const Point3& query, double radius) const {
    std::size_t n = 0;
    if (nodes_.empty() || radius < 0.0) return n;
    visit(0, query, radius * radius, [&](std::uint32_t) { ++n; });
    return n;
  }

 private:
  struct Node {
    Eigen::Vector3d lo, hi;    // bounding box
    std::uint32_t begin, end;  // range in order_
    std::int32_t left = -1, right = -1;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto& pts = *points_;
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (std::uint32_t i = begin; i < end; ++i) {
      node.lo = node.lo.cwiseMin(pts[order_[i]]);
      node.hi = node.hi.cwiseMax(pts[order_[i]]);
    }
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= static_cast<std::uint32_t>(leaf_size_)) return id;

    int axis = 0;
    (node.hi - node.lo).maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return pts[a][axis] < pts[b][axis]; });
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  static double box_distance2(const Node& n, const Point3& q) {
    const Eigen::Vector3d d = (n.lo - q).cwiseMax(q - n.hi).cwiseMax(0.0);
    return d.squaredNorm();
  }

  template <typename Emit>
  void visit(std::int32_t id, const Point3& q, double r2, Emit&& emit) const {
    const Node& n = nodes_[id];
    if (box_distance2(n, q) > r2) return;
    if (n.left < 0) {
      const auto& pts = *points_;
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::uint32_t idx = order_[i];
        if ((pts[idx] - q).squaredNorm() <= r2) emit(idx);
      }
      return;
    }
    visit(n.left, q, r2, emit);
    visit(n.right, q, r2, emit);
  }

  const std::vector<Point3>* points_ = nullptr;
  int leaf_size_ = 16;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// Closed-ball neighbor query.
inline std::vector<std::uint32_t> radius_neighbors(const SpatialIndex& index, const Point3& query, double radius) {
  return index.radius_search(query, radius);
}

}  // namespace zeroreg
