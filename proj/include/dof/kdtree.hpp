#pragma once

#include "dof/common.hpp"

#include <limits>
#include <numeric>
#include <queue>

namespace dof {

struct Neighbor {
  std::size_t index;
  double dist2;
  bool operator<(const Neighbor& o) const {
    return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
  }
};

// Balanced k-d tree over a fixed point set. Equal distances resolve to the
// lower point index so every query is deterministic.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const std::vector<Vec3>& pts) : pts_(pts) {
    idx_.resize(pts_.size());
    std::iota(idx_.begin(), idx_.end(), 0u);
    if (!pts_.empty()) build(0, static_cast<std::uint32_t>(pts_.size()));
  }

  std::size_t size() const { return pts_.size(); }
  const std::vector<Vec3>& points() const { return pts_; }

  Neighbor nearest(const Vec3& q) const {
    Neighbor best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
    if (!nodes_.empty()) nearest_rec(0, q, best);
    return best;
  }

  // Sorted ascending by (distance, index).
  std::vector<Neighbor> knn(const Vec3& q, std::size_t k) const {
    k = std::min(k, pts_.size());
    std::vector<Neighbor> heap;
    heap.reserve(k + 1);
    if (k > 0 && !nodes_.empty()) knn_rec(0, q, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
  }

  std::vector<Neighbor> radius(const Vec3& q, double r) const {
    std::vector<Neighbor> out;
    if (!nodes_.empty()) radius_rec(0, q, r * r, out);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static constexpr std::uint32_t leaf_size = 8;
  struct Node {
    std::uint32_t begin, end;
    int axis;
    double split;
    std::int32_t left = -1, right = -1;
    Vec3 lo = Vec3::Zero(), hi = Vec3::Zero();  // bounding box of the node's points
  };

  double box_dist2(const Node& n, const Vec3& q) const {
    return (n.lo - q).cwiseMax(q - n.hi).cwiseMax(0.0).squaredNorm();
  }

  std::int32_t build(std::uint32_t b, std::uint32_t e) {
    auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({b, e, -1, 0.0});
    Vec3 lo = pts_[idx_[b]], hi = lo;
    for (auto i = b; i < e; ++i) {
      lo = lo.cwiseMin(pts_[idx_[i]]);
      hi = hi.cwiseMax(pts_[idx_[i]]);
    }
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    if (e - b <= leaf_size) return id;
    int axis;
    (hi - lo).maxCoeff(&axis);
    std::uint32_t mid = b + (e - b) / 2;
    std::nth_element(idx_.begin() + b, idx_.begin() + mid, idx_.begin() + e,
                     [&](std::uint32_t x, std::uint32_t y) {
                       double px = pts_[x][axis], py = pts_[y][axis];
                       return px < py || (px == py && x < y);
                     });
    double split = pts_[idx_[mid]][axis];
    std::int32_t l = build(b, mid);
    std::int32_t r = build(mid, e);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void nearest_rec(std::int32_t id, const Vec3& q, Neighbor& best) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (auto i = n.begin; i < n.end; ++i) {
        Neighbor c{idx_[i], (pts_[idx_[i]] - q).squaredNorm()};
        if (c < best) best = c;
      }
      return;
    }
    double d = q[n.axis] - n.split;
    std::int32_t first = d < 0 ? n.left : n.right, second = d < 0 ? n.right : n.left;
    if (box_dist2(nodes_[first], q) <= best.dist2) nearest_rec(first, q, best);
    if (box_dist2(nodes_[second], q) <= best.dist2) nearest_rec(second, q, best);
  }

  void knn_rec(std::int32_t id, const Vec3& q, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (auto i = n.begin; i < n.end; ++i) {
        Neighbor c{idx_[i], (pts_[idx_[i]] - q).squaredNorm()};
        if (heap.size() < k) {
          heap.push_back(c);
          std::push_heap(heap.begin(), heap.end());
        } else if (c < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = c;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    double d = q[n.axis] - n.split;
    std::int32_t first = d < 0 ? n.left : n.right, second = d < 0 ? n.right : n.left;
    knn_rec(first, q, k, heap);
    if (heap.size() < k || d * d <= heap.front().dist2) knn_rec(second, q, k, heap);
  }

  void radius_rec(std::int32_t id, const Vec3& q, double r2, std::vector<Neighbor>& out) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (auto i = n.begin; i < n.end; ++i) {
        double d2 = (pts_[idx_[i]] - q).squaredNorm();
        if (d2 <= r2) out.push_back({idx_[i], d2});
      }
      return;
    }
    double d = q[n.axis] - n.split;
    std::int32_t first = d < 0 ? n.left : n.right, second = d < 0 ? n.right : n.left;
    radius_rec(first, q, r2, out);
    if (d * d <= r2) radius_rec(second, q, r2, out);
  }

  std::vector<Vec3> pts_;
  std::vector<std::uint32_t> idx_;
  std::vector<Node> nodes_;
};

}  // namespace dof
