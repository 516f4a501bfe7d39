#include "dvq/geom/hierarchy.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>

namespace dvq::geom {

namespace {
struct VoxelKeyHash {
  size_t operator()(const std::array<std::int64_t, 3>& k) const {
    size_t h = 1469598103934665603ull;
    for (std::int64_t v : k) {
      h ^= static_cast<size_t>(v);
      h *= 1099511628211ull;
    }
    return h;
  }
};
}  // namespace

DownsampleResult voxel_cluster_downsample(const std::vector<Vec3>& points,
                                          const std::vector<Vec3>& normals,
                                          double voxel_size) {
  if (points.empty()) throw std::runtime_error("voxel downsample: empty point set");
  if (voxel_size < 0) throw std::runtime_error("voxel downsample: negative voxel size");
  if (normals.size() != points.size())
    throw std::runtime_error("voxel downsample: normal count mismatch");

  DownsampleResult r;
  r.mapping.forward.resize(points.size());
  if (voxel_size == 0.0) {
    r.points = points;
    r.normals = normals;
    for (size_t i = 0; i < points.size(); ++i) r.mapping.forward[i] = static_cast<int>(i);
    r.mapping.coarse_count = static_cast<int>(points.size());
    return r;
  }

  const Vec3 origin = bounding_box(points).min;
  std::unordered_map<std::array<std::int64_t, 3>, int, VoxelKeyHash> cells;
  std::vector<int> counts;
  // coarse indices ordered by first appearance, which keeps the result
  // deterministic and independent of hash-table iteration order
  for (size_t i = 0; i < points.size(); ++i) {
    const Vec3 q = (points[i] - origin) / voxel_size;
    const std::array<std::int64_t, 3> key = {static_cast<std::int64_t>(std::floor(q.x)),
                                             static_cast<std::int64_t>(std::floor(q.y)),
                                             static_cast<std::int64_t>(std::floor(q.z))};
    auto [it, inserted] = cells.emplace(key, static_cast<int>(r.points.size()));
    if (inserted) {
      r.points.push_back({});
      r.normals.push_back({});
      counts.push_back(0);
    }
    const int c = it->second;
    r.points[c] += points[i];
    r.normals[c] += normals[i];
    counts[c] += 1;
    r.mapping.forward[i] = c;
  }
  for (size_t c = 0; c < r.points.size(); ++c) {
    r.points[c] *= 1.0 / counts[c];
    r.normals[c] = normalized(r.normals[c]);
  }
  r.mapping.coarse_count = static_cast<int>(r.points.size());
  return r;
}

MeshHierarchy build_hierarchy(const std::vector<Vec3>& points, const std::vector<Vec3>& normals,
                              const std::vector<double>& voxel_sizes,
                              std::optional<std::vector<Face>> faces) {
  if (voxel_sizes.empty()) throw std::runtime_error("build_hierarchy: empty voxel schedule");
  MeshHierarchy h;
  h.voxel_sizes = voxel_sizes;

  HierarchyLevel level0;
  {
    DownsampleResult base = voxel_cluster_downsample(points, normals, voxel_sizes[0]);
    level0.points = std::move(base.points);
    level0.normals = std::move(base.normals);
    if (voxel_sizes[0] == 0.0) level0.faces = std::move(faces);
  }
  h.levels.push_back(std::move(level0));

  for (size_t l = 1; l < voxel_sizes.size(); ++l) {
    const HierarchyLevel& prev = h.levels.back();
    DownsampleResult d = voxel_cluster_downsample(prev.points, prev.normals, voxel_sizes[l]);
    h.mappings.push_back(std::move(d.mapping));
    HierarchyLevel level;
    level.points = std::move(d.points);
    level.normals = std::move(d.normals);
    h.levels.push_back(std::move(level));
  }
  return h;
}

MeshHierarchy build_hierarchy(const TriMesh& mesh, const std::vector<double>& voxel_sizes) {
  return build_hierarchy(mesh.vertices, mesh.normals, voxel_sizes, mesh.faces);
}

std::vector<double> default_voxel_schedule(const TriMesh& mesh) {
  const double o = bbox_longest_edge(mesh);
  return {0.0, o / 16.0, o / 8.0};
}

}  // namespace dvq::geom
