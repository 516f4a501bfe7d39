#include "dvq/geom/kdtree.hpp"

#include <algorithm>

#include "dvq/geom/trimesh.hpp"
#include <numeric>
#include <stdexcept>

namespace dvq::geom {

namespace {
constexpr int kLeafSize = 8;

struct Candidate {
  double d2;
  int index;
  // worst candidate first in the heap; ties ordered so the higher index is
  // considered worse, matching the exhaustive-scan tie rule
  bool operator<(const Candidate& o) const {
    return d2 < o.d2 || (d2 == o.d2 && index < o.index);
  }
};
}  // namespace

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) root_ = build(0, static_cast<int>(points_.size()), 0);
}

int KdTree::build(int begin, int end, int depth) {
  Node node;
  if (end - begin <= kLeafSize) {
    node.point = begin;
    node.count = end - begin;
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }
  // split on the widest axis of the subset
  Aabb box;
  for (int i = begin; i < end; ++i) box.expand(points_[order_[i]]);
  const Vec3 ext = box.extent();
  int axis = 0;
  if (ext.y > ext[axis]) axis = 1;
  if (ext.z > ext[axis]) axis = 2;
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  node.axis = axis;
  node.split = points_[order_[mid]][axis];
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[self].left = left;
  nodes_[self].right = right;
  (void)depth;
  return self;
}

std::vector<int> KdTree::knn(const Vec3& query, int k) const {
  if (points_.empty() || k < 1) return {};
  const int want = std::min<int>(k, static_cast<int>(points_.size()));
  std::vector<Candidate> heap;  // max-heap on (d2, index)
  heap.reserve(want + 1);

  auto consider = [&](int idx) {
    const Candidate c{norm2(points_[idx] - query), idx};
    if (static_cast<int>(heap.size()) < want) {
      heap.push_back(c);
      std::push_heap(heap.begin(), heap.end());
    } else if (c < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = c;
      std::push_heap(heap.begin(), heap.end());
    }
  };

  // iterative traversal, nearer child first
  std::vector<std::pair<int, double>> stack;
  stack.emplace_back(root_, 0.0);
  while (!stack.empty()) {
    auto [ni, min_d2] = stack.back();
    stack.pop_back();
    // equal-distance subtrees must still be visited so lower indices can win ties
    if (static_cast<int>(heap.size()) == want && min_d2 > heap.front().d2) continue;
    const Node& node = nodes_[ni];
    if (node.point >= 0) {
      for (int i = 0; i < node.count; ++i) consider(order_[node.point + i]);
      continue;
    }
    const double delta = query[node.axis] - node.split;
    const double off_d2 = delta * delta;
    const int near_child = delta < 0 ? node.left : node.right;
    const int far_child = delta < 0 ? node.right : node.left;
    stack.emplace_back(far_child, std::max(min_d2, off_d2));
    stack.emplace_back(near_child, min_d2);
  }

  std::sort(heap.begin(), heap.end());
  std::vector<int> out(heap.size());
  for (size_t i = 0; i < heap.size(); ++i) out[i] = heap[i].index;
  return out;
}

int KdTree::nearest(const Vec3& query) const {
  double d2;
  return nearest(query, d2);
}

int KdTree::nearest(const Vec3& query, double& dist_sq_out) const {
  if (points_.empty()) throw std::runtime_error("nearest query on empty point set");
  const std::vector<int> r = knn(query, 1);
  dist_sq_out = norm2(points_[r[0]] - query);
  return r[0];
}

std::vector<std::vector<int>> knn(const std::vector<Vec3>& queries,
                                  const std::vector<Vec3>& references, int k) {
  if (references.empty()) throw std::runtime_error("knn: empty reference set");
  if (k < 1) throw std::runtime_error("knn: k must be >= 1");
  KdTree tree(references);
  std::vector<std::vector<int>> out(queries.size());
  for (size_t i = 0; i < queries.size(); ++i) out[i] = tree.knn(queries[i], k);
  return out;
}

}  // namespace dvq::geom
