#pragma once

#include <vector>

#include "dvq/geom/vec3.hpp"

namespace dvq::geom {

// Static 3-d tree over a point set. Queries reproduce an exhaustive scan
// exactly: ascending distance, ties broken by lower point index.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  // Indices of the min(k, n) nearest points.
  std::vector<int> knn(const Vec3& query, int k) const;

  // Nearest single point; tree must be non-empty.
  int nearest(const Vec3& query) const;
  int nearest(const Vec3& query, double& dist_sq_out) const;

  int size() const { return static_cast<int>(points_.size()); }
  const std::vector<Vec3>& points() const { return points_; }

 private:
  struct Node {
    int left = -1, right = -1;
    int point = -1;   // leaf payload start
    int count = 0;    // leaf payload length
    int axis = -1;
    double split = 0;
  };

  int build(int begin, int end, int depth);

  std::vector<Vec3> points_;
  std::vector<int> order_;  // permutation of point indices, leaf-contiguous
  std::vector<Node> nodes_;
  int root_ = -1;
};

// knn over a whole query set; rows of the result are the per-query neighbor
// lists (min(k, |references|) columns).
std::vector<std::vector<int>> knn(const std::vector<Vec3>& queries,
                                  const std::vector<Vec3>& references, int k);

}  // namespace dvq::geom
