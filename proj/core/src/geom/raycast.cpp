#include "dvq/geom/raycast.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dvq/geom/kdtree.hpp"

namespace dvq::geom {

std::optional<double> ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                                   const Vec3& b, const Vec3& c) {
  // pick the dominant direction axis and shear the triangle into ray space
  int kz = 0;
  Vec3 ad{std::abs(dir.x), std::abs(dir.y), std::abs(dir.z)};
  if (ad.y > ad[kz]) kz = 1;
  if (ad.z > ad[kz]) kz = 2;
  int kx = (kz + 1) % 3, ky = (kz + 2) % 3;
  if (dir[kz] < 0.0) std::swap(kx, ky);

  const double sx = dir[kx] / dir[kz];
  const double sy = dir[ky] / dir[kz];
  const double sz = 1.0 / dir[kz];

  const Vec3 pa = a - origin, pb = b - origin, pc = c - origin;
  const double ax = pa[kx] - sx * pa[kz], ay = pa[ky] - sy * pa[kz];
  const double bx = pb[kx] - sx * pb[kz], by = pb[ky] - sy * pb[kz];
  const double cx = pc[kx] - sx * pc[kz], cy = pc[ky] - sy * pc[kz];

  const double u = cx * by - cy * bx;
  const double v = ax * cy - ay * cx;
  const double w = bx * ay - by * ax;

  if ((u < 0 || v < 0 || w < 0) && (u > 0 || v > 0 || w > 0)) return std::nullopt;
  const double det = u + v + w;
  if (det == 0.0) return std::nullopt;

  const double az = sz * pa[kz], bz = sz * pb[kz], cz = sz * pc[kz];
  const double t = (u * az + v * bz + w * cz) / det;
  return t;
}

std::optional<RayHit> ray_cast(const Vec3& origin, const Vec3& dir, const TriMesh& mesh) {
  if (norm2(dir) == 0.0) throw std::runtime_error("ray_cast: zero direction");
  std::optional<RayHit> best;
  for (int fi = 0; fi < mesh.face_count(); ++fi) {
    const Face& f = mesh.faces[fi];
    const auto t = ray_triangle(origin, dir, mesh.vertices[f[0]], mesh.vertices[f[1]],
                                mesh.vertices[f[2]]);
    if (t && *t > 1e-9 && (!best || *t < best->t)) best = RayHit{*t, fi};
  }
  return best;
}

std::vector<RayHit> ray_all_hits(const Vec3& origin, const Vec3& dir, const TriMesh& mesh,
                                 double tmin) {
  std::vector<RayHit> hits;
  for (int fi = 0; fi < mesh.face_count(); ++fi) {
    const Face& f = mesh.faces[fi];
    const auto t = ray_triangle(origin, dir, mesh.vertices[f[0]], mesh.vertices[f[1]],
                                mesh.vertices[f[2]]);
    if (t && *t > tmin) hits.push_back({*t, fi});
  }
  std::sort(hits.begin(), hits.end(), [](const RayHit& a, const RayHit& b) { return a.t < b.t; });
  return hits;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Ericson, Real-Time Collision Detection, 5.1.5
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) return a;

  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));

  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));

  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

double point_mesh_distance(const Vec3& p, const TriMesh& mesh) {
  if (mesh.faces.empty()) throw std::runtime_error("point_mesh_distance: mesh has no faces");
  double best = 1e300;
  for (const Face& f : mesh.faces) {
    const Vec3 q =
        closest_point_on_triangle(p, mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
    best = std::min(best, norm2(q - p));
  }
  return std::sqrt(best);
}

double squared_chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw std::runtime_error("chamfer: empty point set");
  const KdTree ta(a), tb(b);
  double sum_ab = 0, sum_ba = 0;
  double d2;
  for (const Vec3& p : a) {
    tb.nearest(p, d2);
    sum_ab += d2;
  }
  for (const Vec3& p : b) {
    ta.nearest(p, d2);
    sum_ba += d2;
  }
  return sum_ab / static_cast<double>(a.size()) + sum_ba / static_cast<double>(b.size());
}

}  // namespace dvq::geom
