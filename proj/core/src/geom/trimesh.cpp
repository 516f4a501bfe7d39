#include "dvq/geom/trimesh.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace dvq::geom {

std::vector<Vec3> compute_vertex_normals(const std::vector<Vec3>& vertices,
                                         const std::vector<Face>& faces) {
  std::vector<Vec3> normals(vertices.size());
  for (const Face& f : faces) {
    const Vec3& a = vertices[f[0]];
    const Vec3& b = vertices[f[1]];
    const Vec3& c = vertices[f[2]];
    // cross product length is twice the face area, so summing the raw cross
    // products is already the area weighting
    const Vec3 n = cross(b - a, c - a);
    normals[f[0]] += n;
    normals[f[1]] += n;
    normals[f[2]] += n;
  }
  for (Vec3& n : normals) n = normalized(n);
  return normals;
}

void validate(const TriMesh& mesh) {
  const int nv = mesh.vertex_count();
  for (int fi = 0; fi < mesh.face_count(); ++fi) {
    const Face& f = mesh.faces[fi];
    for (int k = 0; k < 3; ++k) {
      if (f[k] < 0 || f[k] >= nv) {
        std::ostringstream os;
        os << "face " << fi << " references vertex " << f[k] << " out of range 0.." << nv - 1;
        throw std::runtime_error(os.str());
      }
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      std::ostringstream os;
      os << "face " << fi << " is degenerate (repeated vertex index)";
      throw std::runtime_error(os.str());
    }
  }
  if (!mesh.normals.empty()) {
    if (mesh.normals.size() != mesh.vertices.size())
      throw std::runtime_error("normal count does not match vertex count");
    for (size_t i = 0; i < mesh.normals.size(); ++i) {
      const double n = norm(mesh.normals[i]);
      if (n != 0.0 && std::abs(n - 1.0) > 1e-6) {
        std::ostringstream os;
        os << "normal " << i << " has length " << n;
        throw std::runtime_error(os.str());
      }
    }
  }
}

Aabb bounding_box(const std::vector<Vec3>& points) {
  Aabb box;
  for (const Vec3& p : points) box.expand(p);
  return box;
}

double bbox_longest_edge(const TriMesh& mesh) {
  const Vec3 e = bounding_box(mesh.vertices).extent();
  return std::max(e.x, std::max(e.y, e.z));
}

Vec3 centroid(const std::vector<Vec3>& points) {
  Vec3 c;
  for (const Vec3& p : points) c += p;
  return points.empty() ? c : c / static_cast<double>(points.size());
}

namespace {
int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}
}  // namespace

std::pair<std::vector<int>, int> face_components(const TriMesh& mesh) {
  // union faces through shared vertices
  std::vector<int> parent(mesh.face_count());
  std::iota(parent.begin(), parent.end(), 0);
  std::unordered_map<int, int> vertex_face;  // vertex -> representative face
  for (int fi = 0; fi < mesh.face_count(); ++fi) {
    for (int k = 0; k < 3; ++k) {
      auto [it, inserted] = vertex_face.emplace(mesh.faces[fi][k], fi);
      if (!inserted) {
        const int a = find_root(parent, fi);
        const int b = find_root(parent, it->second);
        if (a != b) parent[a] = b;
      }
    }
  }
  std::vector<int> comp(mesh.face_count(), -1);
  int count = 0;
  std::unordered_map<int, int> root_id;
  for (int fi = 0; fi < mesh.face_count(); ++fi) {
    const int r = find_root(parent, fi);
    auto [it, inserted] = root_id.emplace(r, count);
    if (inserted) ++count;
    comp[fi] = it->second;
  }
  return {comp, count};
}

}  // namespace dvq::geom
