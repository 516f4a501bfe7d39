#pragma once

#include <optional>
#include <vector>

#include "dvq/geom/trimesh.hpp"

namespace dvq::geom {

// Total map from fine-level points onto contiguous coarse indices; every
// coarse point has at least one preimage.
struct PointMapping {
  std::vector<int> forward;
  int coarse_count = 0;
};

struct HierarchyLevel {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::optional<std::vector<Face>> faces;  // level 0 only
};

struct MeshHierarchy {
  std::vector<HierarchyLevel> levels;
  std::vector<PointMapping> mappings;  // mappings[l] connects levels l and l+1
  std::vector<double> voxel_sizes;

  int level_count() const { return static_cast<int>(levels.size()); }
};

struct DownsampleResult {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  PointMapping mapping;
};

// Collapses points sharing an axis-aligned voxel to their centroid; the
// grid is anchored at the bounding-box minimum corner. Size 0 is the
// identity. Coarse normals are the normalized mean of member normals.
DownsampleResult voxel_cluster_downsample(const std::vector<Vec3>& points,
                                          const std::vector<Vec3>& normals,
                                          double voxel_size);

MeshHierarchy build_hierarchy(const TriMesh& mesh, const std::vector<double>& voxel_sizes);
MeshHierarchy build_hierarchy(const std::vector<Vec3>& points, const std::vector<Vec3>& normals,
                              const std::vector<double>& voxel_sizes,
                              std::optional<std::vector<Face>> faces = std::nullopt);

// {0, O/16, O/8} with O the longest bounding-box edge.
std::vector<double> default_voxel_schedule(const TriMesh& mesh);

}  // namespace dvq::geom
