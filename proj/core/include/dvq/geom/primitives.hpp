#pragma once

#include <functional>

#include "dvq/geom/trimesh.hpp"

namespace dvq::geom {

// Closed box with each face split into an n x n quad grid (welded edges).
TriMesh make_box(const Vec3& center, const Vec3& half_extents, int subdiv = 1);

// Subdivided icosahedron projected onto the sphere.
TriMesh make_icosphere(const Vec3& center, double radius, int subdivisions = 2);

TriMesh make_ellipsoid(const Vec3& center, const Vec3& radii, int subdivisions = 2);

// Capped cylinder along +z before `axis_rotation` is applied; `stacks`
// subdivides the lateral wall along the axis.
TriMesh make_cylinder(const Vec3& center, double radius, double height, int segments = 24,
                      const Vec3& axis_rotation = {}, int stacks = 1);

// Open unit-square grid in the z = 0 plane, n x n quads over [0,1]^2.
TriMesh make_grid_square(int n);

TriMesh make_tetrahedron();

// Concatenates vertex/face/normal arrays; components stay disjoint.
TriMesh merge_meshes(const TriMesh& a, const TriMesh& b);

void translate(TriMesh& mesh, const Vec3& offset);
void transform(TriMesh& mesh, const Mat3& rotation, const Vec3& offset);

struct SurfaceSample {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // interpolated vertex normals
};

// Area-weighted random surface sampling with a caller-provided uniform
// generator in [0,1) (kept generic so seeding stays in one place).
SurfaceSample sample_surface(const TriMesh& mesh, int count,
                             const std::function<double()>& uniform01);

}  // namespace dvq::geom
