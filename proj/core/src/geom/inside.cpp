#include "dvq/geom/inside.hpp"

#include <algorithm>
#include <cmath>

#include "dvq/geom/raycast.hpp"

namespace dvq::geom {

namespace {

// Dodges exact edge/vertex alignment between lattice rays and lattice
// meshes; well below any tolerance used by callers.
constexpr double kJitter = 1.2345678e-7;

struct AxisFrame {
  int u, v, w;  // w is the sweep axis
};

// Parity sweep along one axis for every (u,v) column of the grid.
void sweep_axis(const TriMesh& mesh, const std::vector<int>& face_comp, int comp_count,
                const ParityGrid& grid, const AxisFrame& ax, std::vector<std::uint8_t>& votes) {
  const int dims[3] = {grid.nx, grid.ny, grid.nz};
  const int nu = dims[ax.u], nv = dims[ax.v], nw = dims[ax.w];

  // rays must start outside the mesh, which may extend past the grid
  const Aabb mesh_box = bounding_box(mesh.vertices);
  const double ray_start = std::min(grid.origin[ax.w], mesh_box.min[ax.w]) - grid.step;

  // bucket triangles by their (u,v) bbox footprint
  std::vector<std::vector<int>> buckets(static_cast<size_t>(nu) * nv);
  for (int fi = 0; fi < mesh.face_count(); ++fi) {
    const Face& f = mesh.faces[fi];
    double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
    for (int k = 0; k < 3; ++k) {
      const Vec3& p = mesh.vertices[f[k]];
      umin = std::min(umin, p[ax.u]);
      umax = std::max(umax, p[ax.u]);
      vmin = std::min(vmin, p[ax.v]);
      vmax = std::max(vmax, p[ax.v]);
    }
    auto cell_of = [&](double x, double o) {
      return static_cast<int>(std::floor((x - o) / grid.step - 0.5 - kJitter / grid.step));
    };
    const double ou = grid.origin[ax.u], ov = grid.origin[ax.v];
    const int iu0 = std::clamp(cell_of(umin, ou), 0, nu - 1);
    const int iu1 = std::clamp(cell_of(umax, ou) + 1, 0, nu - 1);
    const int iv0 = std::clamp(cell_of(vmin, ov), 0, nv - 1);
    const int iv1 = std::clamp(cell_of(vmax, ov) + 1, 0, nv - 1);
    for (int iu = iu0; iu <= iu1; ++iu)
      for (int iv = iv0; iv <= iv1; ++iv) buckets[static_cast<size_t>(iu) * nv + iv].push_back(fi);
  }

  Vec3 dir{};
  dir[ax.w] = 1.0;
  std::vector<int> odd(comp_count);
  std::vector<std::pair<double, int>> hits;  // (w coordinate of crossing, component)

  for (int iu = 0; iu < nu; ++iu) {
    for (int iv = 0; iv < nv; ++iv) {
      const auto& bucket = buckets[static_cast<size_t>(iu) * nv + iv];
      if (bucket.empty()) continue;
      Vec3 origin = grid.origin;
      origin[ax.u] += (iu + 0.5) * grid.step + kJitter;
      origin[ax.v] += (iv + 0.5) * grid.step + kJitter;
      origin[ax.w] = ray_start;

      hits.clear();
      for (int fi : bucket) {
        const Face& f = mesh.faces[fi];
        const auto t = ray_triangle(origin, dir, mesh.vertices[f[0]], mesh.vertices[f[1]],
                                    mesh.vertices[f[2]]);
        if (t && *t > 0) hits.emplace_back(origin[ax.w] + *t, face_comp[fi]);
      }
      if (hits.empty()) continue;
      std::sort(hits.begin(), hits.end());

      std::fill(odd.begin(), odd.end(), 0);
      int odd_total = 0;
      size_t h = 0;
      for (int iw = 0; iw < nw; ++iw) {
        const double wc = grid.origin[ax.w] + (iw + 0.5) * grid.step;
        while (h < hits.size() && hits[h].first < wc) {
          const int c = hits[h].second;
          odd[c] ^= 1;
          odd_total += odd[c] ? 1 : -1;
          ++h;
        }
        if (odd_total > 0) {
          int idx[3];
          idx[ax.u] = iu;
          idx[ax.v] = iv;
          idx[ax.w] = iw;
          votes[(static_cast<size_t>(idx[0]) * grid.ny + idx[1]) * grid.nz + idx[2]] += 1;
        }
      }
    }
  }
}

}  // namespace

std::vector<std::uint8_t> inside_mask(const TriMesh& mesh, const ParityGrid& grid) {
  std::vector<std::uint8_t> votes(grid.cell_count(), 0);
  if (mesh.faces.empty() || grid.cell_count() == 0) return votes;
  const auto [face_comp, comp_count] = face_components(mesh);
  sweep_axis(mesh, face_comp, comp_count, grid, {1, 2, 0}, votes);
  sweep_axis(mesh, face_comp, comp_count, grid, {2, 0, 1}, votes);
  sweep_axis(mesh, face_comp, comp_count, grid, {0, 1, 2}, votes);
  for (std::uint8_t& v : votes) v = v >= 2 ? 1 : 0;
  return votes;
}

namespace {
bool axis_parity(const TriMesh& mesh, const std::vector<int>& face_comp, int comp_count,
                 const Vec3& p, int axis) {
  Vec3 dir{};
  dir[axis] = 1.0;
  Vec3 origin = p;
  origin[(axis + 1) % 3] += kJitter;
  origin[(axis + 2) % 3] += kJitter;
  std::vector<int> odd(comp_count, 0);
  for (int fi = 0; fi < mesh.face_count(); ++fi) {
    const Face& f = mesh.faces[fi];
    const auto t = ray_triangle(origin, dir, mesh.vertices[f[0]], mesh.vertices[f[1]],
                                mesh.vertices[f[2]]);
    if (t && *t > 0) odd[face_comp[fi]] ^= 1;
  }
  return std::any_of(odd.begin(), odd.end(), [](int o) { return o != 0; });
}
}  // namespace

bool point_inside(const TriMesh& mesh, const Vec3& p) {
  if (mesh.faces.empty()) return false;
  const auto [face_comp, comp_count] = face_components(mesh);
  int votes = 0;
  for (int axis = 0; axis < 3; ++axis)
    if (axis_parity(mesh, face_comp, comp_count, p, axis)) ++votes;
  return votes >= 2;
}

bool parity_consistent(const TriMesh& mesh, const Vec3& p) {
  const auto [face_comp, comp_count] = face_components(mesh);
  const bool a = axis_parity(mesh, face_comp, comp_count, p, 0);
  const bool b = axis_parity(mesh, face_comp, comp_count, p, 1);
  const bool c = axis_parity(mesh, face_comp, comp_count, p, 2);
  return a == b && b == c;
}

}  // namespace dvq::geom
