#pragma once

#include <cstdint>

#include "dvq/geom/trimesh.hpp"

namespace dvq::geom {

// Regular grid of cell centers: center(i,j,k) = origin + (i+1/2, j+1/2, k+1/2)*step.
struct ParityGrid {
  Vec3 origin;
  double step = 0;
  int nx = 0, ny = 0, nz = 0;

  Vec3 center(int i, int j, int k) const {
    return {origin.x + (i + 0.5) * step, origin.y + (j + 0.5) * step,
            origin.z + (k + 0.5) * step};
  }
  std::int64_t cell_count() const {
    return static_cast<std::int64_t>(nx) * ny * nz;
  }
};

// Inside/outside of a solid bounded by the mesh. Crossing parity is counted
// per connected component and OR-ed, so unions of closed shells behave as
// the union of their solids; each cell takes the majority over the 3 axes.
std::vector<std::uint8_t> inside_mask(const TriMesh& mesh, const ParityGrid& grid);

bool point_inside(const TriMesh& mesh, const Vec3& p);

// True when all three axis-parallel parity probes agree at p.
bool parity_consistent(const TriMesh& mesh, const Vec3& p);

}  // namespace dvq::geom
