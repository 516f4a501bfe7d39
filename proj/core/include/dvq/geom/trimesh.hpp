#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dvq/geom/vec3.hpp"

namespace dvq::geom {

using Face = std::array<int, 3>;

// Triangle mesh: vertices in meters, faces as vertex-index triples and one
// unit normal per vertex (zero only for isolated vertices).
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec3> normals;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }
};

// Area-weighted incident-face normals, normalized per vertex.
// Isolated vertices get the zero vector; degenerate faces contribute nothing.
std::vector<Vec3> compute_vertex_normals(const std::vector<Vec3>& vertices,
                                         const std::vector<Face>& faces);

inline void recompute_normals(TriMesh& mesh) {
  mesh.normals = compute_vertex_normals(mesh.vertices, mesh.faces);
}

// Throws if a face index is out of range, a face repeats a vertex, or a
// normal is neither unit length (1e-6) nor exactly zero.
void validate(const TriMesh& mesh);

struct Aabb {
  Vec3 min{1e300, 1e300, 1e300};
  Vec3 max{-1e300, -1e300, -1e300};

  void expand(const Vec3& p) {
    for (int a = 0; a < 3; ++a) {
      if (p[a] < min[a]) min[a] = p[a];
      if (p[a] > max[a]) max[a] = p[a];
    }
  }
  Vec3 extent() const { return max - min; }
  bool empty() const { return min.x > max.x; }
};

Aabb bounding_box(const std::vector<Vec3>& points);

// Longest bounding-box edge; the object-size scalar the voxel schedule
// is derived from.
double bbox_longest_edge(const TriMesh& mesh);

Vec3 centroid(const std::vector<Vec3>& points);

// Connected components over face-adjacency (shared vertices); returns a
// face -> component id map and the component count.
std::pair<std::vector<int>, int> face_components(const TriMesh& mesh);

}  // namespace dvq::geom
