#pragma once

#include <optional>

#include "dvq/geom/trimesh.hpp"

namespace dvq::geom {

struct RayHit {
  double t = 0;
  int face = -1;
};

// Watertight ray/triangle intersection (shear + scale to ray space, edge
// tests consistent across shared edges). Both orientations hit.
std::optional<double> ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                                   const Vec3& b, const Vec3& c);

// Nearest intersection with t > 1e-9 along an arbitrary-length direction.
std::optional<RayHit> ray_cast(const Vec3& origin, const Vec3& dir, const TriMesh& mesh);

// All crossings t > tmin along the ray in ascending order (for parity tests).
std::vector<RayHit> ray_all_hits(const Vec3& origin, const Vec3& dir, const TriMesh& mesh,
                                 double tmin = 1e-9);

// Closest point on a triangle to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Unsigned distance from p to the mesh surface.
double point_mesh_distance(const Vec3& p, const TriMesh& mesh);

double squared_chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

}  // namespace dvq::geom
