#pragma once

#include "dvq/geom/trimesh.hpp"

namespace dvq::geom {

// Shrink-free Taubin smoothing: each iteration is one uniform-Laplacian
// step with factor lambda followed by one with factor mu (mu < -lambda).
// Topology is untouched; iterations = 0 returns the input unchanged.
TriMesh taubin_smooth(const TriMesh& mesh, double lambda = 0.5, double mu = -0.53,
                      int iterations = 10);

struct MeshObjectives {
  double laplacian = 0;          // mean |uniform Laplacian| per vertex
  double normal_consistency = 0;  // mean (1 - cos) over adjacent-face pairs
};

MeshObjectives mesh_objectives(const TriMesh& mesh);

// Edge-adjacent vertex lists derived from faces (sorted, deduplicated).
std::vector<std::vector<int>> vertex_adjacency(const TriMesh& mesh);

// Pairs of faces sharing an edge.
std::vector<std::pair<int, int>> adjacent_face_pairs(const TriMesh& mesh);

}  // namespace dvq::geom
