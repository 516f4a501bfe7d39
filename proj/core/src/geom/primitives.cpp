#include "dvq/geom/primitives.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>

namespace dvq::geom {

TriMesh make_box(const Vec3& center, const Vec3& half, int subdiv) {
  TriMesh mesh;
  const int n = std::max(1, subdiv);
  // integer lattice keys keep shared face-edge vertices exactly welded
  std::map<std::array<int, 3>, int> lattice;
  auto vertex_at = [&](int ix, int iy, int iz) {
    auto [it, inserted] = lattice.emplace(std::array<int, 3>{ix, iy, iz},
                                          static_cast<int>(mesh.vertices.size()));
    if (inserted) {
      mesh.vertices.push_back({center.x + half.x * (2.0 * ix / n - 1.0),
                               center.y + half.y * (2.0 * iy / n - 1.0),
                               center.z + half.z * (2.0 * iz / n - 1.0)});
    }
    return it->second;
  };
  // each closure maps grid (u,v) to lattice coords; winding chosen outward
  struct FaceSpec {
    std::array<int, 3> (*map)(int, int, int);
    bool flip;
  };
  const FaceSpec specs[6] = {
      {[](int u, int v, int n_) { (void)n_; return std::array<int, 3>{u, v, 0}; }, true},   // z-
      {[](int u, int v, int n_) { return std::array<int, 3>{u, v, n_}; }, false},           // z+
      {[](int u, int v, int n_) { (void)n_; return std::array<int, 3>{u, 0, v}; }, false},  // y-
      {[](int u, int v, int n_) { return std::array<int, 3>{u, n_, v}; }, true},            // y+
      {[](int u, int v, int n_) { (void)n_; return std::array<int, 3>{0, u, v}; }, true},   // x-
      {[](int u, int v, int n_) { return std::array<int, 3>{n_, u, v}; }, false},           // x+
  };
  for (const FaceSpec& spec : specs) {
    for (int u = 0; u < n; ++u) {
      for (int v = 0; v < n; ++v) {
        const auto c00 = spec.map(u, v, n), c10 = spec.map(u + 1, v, n);
        const auto c01 = spec.map(u, v + 1, n), c11 = spec.map(u + 1, v + 1, n);
        const int i00 = vertex_at(c00[0], c00[1], c00[2]);
        const int i10 = vertex_at(c10[0], c10[1], c10[2]);
        const int i01 = vertex_at(c01[0], c01[1], c01[2]);
        const int i11 = vertex_at(c11[0], c11[1], c11[2]);
        if (spec.flip) {
          mesh.faces.push_back({i00, i01, i11});
          mesh.faces.push_back({i00, i11, i10});
        } else {
          mesh.faces.push_back({i00, i11, i01});
          mesh.faces.push_back({i00, i10, i11});
        }
      }
    }
  }
  recompute_normals(mesh);
  return mesh;
}

TriMesh make_icosphere(const Vec3& center, double radius, int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriMesh mesh;
  mesh.vertices = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
                   {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& v : mesh.vertices) v = normalized(v);
  mesh.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},
                {5, 11, 4}, {11, 10, 2}, {10, 7, 6},  {7, 1, 8},  {3, 9, 4},   {3, 4, 2},
                {3, 2, 6},  {3, 6, 8},  {3, 8, 9},   {4, 9, 5},  {2, 4, 11},  {6, 2, 10},
                {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoints;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto [it, inserted] = midpoints.emplace(key, static_cast<int>(mesh.vertices.size()));
      if (inserted)
        mesh.vertices.push_back(normalized(mesh.vertices[a] + mesh.vertices[b]));
      return it->second;
    };
    std::vector<Face> next;
    next.reserve(mesh.faces.size() * 4);
    for (const Face& f : mesh.faces) {
      const int ab = midpoint(f[0], f[1]);
      const int bc = midpoint(f[1], f[2]);
      const int ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    mesh.faces = std::move(next);
  }
  for (Vec3& v : mesh.vertices) v = center + v * radius;
  recompute_normals(mesh);
  return mesh;
}

TriMesh make_ellipsoid(const Vec3& center, const Vec3& radii, int subdivisions) {
  TriMesh mesh = make_icosphere({}, 1.0, subdivisions);
  for (Vec3& v : mesh.vertices)
    v = {center.x + v.x * radii.x, center.y + v.y * radii.y, center.z + v.z * radii.z};
  recompute_normals(mesh);
  return mesh;
}

TriMesh make_cylinder(const Vec3& center, double radius, double height, int segments,
                      const Vec3& axis_rotation, int stacks) {
  TriMesh mesh;
  const double hz = height / 2;
  const int n = std::max(1, stacks);
  for (int ring = 0; ring <= n; ++ring) {
    const double z = -hz + height * ring / n;
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * M_PI * s / segments;
      mesh.vertices.push_back({radius * std::cos(a), radius * std::sin(a), z});
    }
  }
  const int bottom_center = static_cast<int>(mesh.vertices.size());
  mesh.vertices.push_back({0, 0, -hz});
  const int top_center = bottom_center + 1;
  mesh.vertices.push_back({0, 0, hz});
  for (int ring = 0; ring < n; ++ring) {
    const int lo = ring * segments, hi = (ring + 1) * segments;
    for (int s = 0; s < segments; ++s) {
      const int sn = (s + 1) % segments;
      mesh.faces.push_back({lo + s, lo + sn, hi + s});
      mesh.faces.push_back({lo + sn, hi + sn, hi + s});
    }
  }
  const int top = n * segments;
  for (int s = 0; s < segments; ++s) {
    const int sn = (s + 1) % segments;
    mesh.faces.push_back({bottom_center, sn, s});
    mesh.faces.push_back({top_center, top + s, top + sn});
  }
  const Mat3 rot = axis_angle_to_matrix(axis_rotation);
  for (Vec3& v : mesh.vertices) v = rot * v + center;
  recompute_normals(mesh);
  return mesh;
}

TriMesh make_grid_square(int n) {
  TriMesh mesh;
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      mesh.vertices.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n, 0});
  auto at = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      mesh.faces.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      mesh.faces.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  }
  recompute_normals(mesh);
  return mesh;
}

TriMesh make_tetrahedron() {
  TriMesh mesh;
  mesh.vertices = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  mesh.faces = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  recompute_normals(mesh);
  return mesh;
}

TriMesh merge_meshes(const TriMesh& a, const TriMesh& b) {
  TriMesh out = a;
  const int offset = a.vertex_count();
  out.vertices.insert(out.vertices.end(), b.vertices.begin(), b.vertices.end());
  out.normals.insert(out.normals.end(), b.normals.begin(), b.normals.end());
  for (const Face& f : b.faces) out.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
  return out;
}

void translate(TriMesh& mesh, const Vec3& offset) {
  for (Vec3& v : mesh.vertices) v += offset;
}

void transform(TriMesh& mesh, const Mat3& rotation, const Vec3& offset) {
  for (Vec3& v : mesh.vertices) v = rotation * v + offset;
  for (Vec3& n : mesh.normals) n = rotation * n;
}

SurfaceSample sample_surface(const TriMesh& mesh, int count,
                             const std::function<double()>& uniform01) {
  if (mesh.faces.empty()) throw std::runtime_error("sample_surface: mesh has no faces");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0;
  for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const Face& f = mesh.faces[fi];
    total += 0.5 * norm(cross(mesh.vertices[f[1]] - mesh.vertices[f[0]],
                              mesh.vertices[f[2]] - mesh.vertices[f[0]]));
    cumulative[fi] = total;
  }
  SurfaceSample out;
  out.points.reserve(count);
  out.normals.reserve(count);
  for (int s = 0; s < count; ++s) {
    const double pick = uniform01() * total;
    const size_t fi = std::lower_bound(cumulative.begin(), cumulative.end(), pick) -
                      cumulative.begin();
    const Face& f = mesh.faces[std::min(fi, mesh.faces.size() - 1)];
    double u = uniform01(), v = uniform01();
    if (u + v > 1) {
      u = 1 - u;
      v = 1 - v;
    }
    const double w = 1 - u - v;
    out.points.push_back(mesh.vertices[f[0]] * w + mesh.vertices[f[1]] * u +
                         mesh.vertices[f[2]] * v);
    out.normals.push_back(normalized(mesh.normals[f[0]] * w + mesh.normals[f[1]] * u +
                                     mesh.normals[f[2]] * v));
  }
  return out;
}

}  // namespace dvq::geom
