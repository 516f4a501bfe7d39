#include "dvq/geom/smooth.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace dvq::geom {

std::vector<std::vector<int>> vertex_adjacency(const TriMesh& mesh) {
  std::vector<std::vector<int>> adj(mesh.vertex_count());
  for (const Face& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k], b = f[(k + 1) % 3];
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
  }
  for (std::vector<int>& n : adj) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return adj;
}

std::vector<std::pair<int, int>> adjacent_face_pairs(const TriMesh& mesh) {
  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  for (int fi = 0; fi < mesh.face_count(); ++fi) {
    const Face& f = mesh.faces[fi];
    for (int k = 0; k < 3; ++k) {
      const int a = std::min(f[k], f[(k + 1) % 3]);
      const int b = std::max(f[k], f[(k + 1) % 3]);
      edge_faces[{a, b}].push_back(fi);
    }
  }
  std::vector<std::pair<int, int>> pairs;
  for (const auto& [edge, faces] : edge_faces)
    for (size_t i = 0; i < faces.size(); ++i)
      for (size_t j = i + 1; j < faces.size(); ++j) pairs.emplace_back(faces[i], faces[j]);
  return pairs;
}

namespace {
void laplacian_step(std::vector<Vec3>& vertices, const std::vector<std::vector<int>>& adj,
                    double factor) {
  std::vector<Vec3> next = vertices;
  for (size_t i = 0; i < vertices.size(); ++i) {
    if (adj[i].empty()) continue;
    Vec3 mean;
    for (int j : adj[i]) mean += vertices[j];
    mean *= 1.0 / static_cast<double>(adj[i].size());
    next[i] = vertices[i] + factor * (mean - vertices[i]);
  }
  vertices.swap(next);
}
}  // namespace

TriMesh taubin_smooth(const TriMesh& mesh, double lambda, double mu, int iterations) {
  if (!(lambda > 0 && lambda < 1)) throw std::runtime_error("taubin: lambda must be in (0,1)");
  if (!(mu < -lambda)) throw std::runtime_error("taubin: mu must be < -lambda");
  if (iterations < 0) throw std::runtime_error("taubin: negative iteration count");
  TriMesh out = mesh;
  if (iterations == 0) return out;
  const std::vector<std::vector<int>> adj = vertex_adjacency(mesh);
  for (int it = 0; it < iterations; ++it) {
    laplacian_step(out.vertices, adj, lambda);
    laplacian_step(out.vertices, adj, mu);
  }
  recompute_normals(out);
  return out;
}

MeshObjectives mesh_objectives(const TriMesh& mesh) {
  if (mesh.faces.empty()) throw std::runtime_error("mesh_objectives: mesh has no faces");
  MeshObjectives obj;

  const std::vector<std::vector<int>> adj = vertex_adjacency(mesh);
  double lap_sum = 0;
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    if (adj[i].empty()) continue;
    Vec3 mean;
    for (int j : adj[i]) mean += mesh.vertices[j];
    mean *= 1.0 / static_cast<double>(adj[i].size());
    lap_sum += norm(mean - mesh.vertices[i]);
  }
  obj.laplacian = lap_sum / mesh.vertex_count();

  std::vector<Vec3> face_normals(mesh.face_count());
  for (int fi = 0; fi < mesh.face_count(); ++fi) {
    const Face& f = mesh.faces[fi];
    face_normals[fi] = normalized(
        cross(mesh.vertices[f[1]] - mesh.vertices[f[0]], mesh.vertices[f[2]] - mesh.vertices[f[0]]));
  }
  const std::vector<std::pair<int, int>> pairs = adjacent_face_pairs(mesh);
  if (!pairs.empty()) {
    double sum = 0;
    for (const auto& [a, b] : pairs) sum += 1.0 - dot(face_normals[a], face_normals[b]);
    obj.normal_consistency = sum / static_cast<double>(pairs.size());
  }
  return obj;
}

}  // namespace dvq::geom
