#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dvq/geom/hierarchy.hpp"
#include "dvq/geom/inside.hpp"
#include "dvq/geom/kdtree.hpp"
#include "dvq/geom/mesh_io.hpp"
#include "dvq/geom/primitives.hpp"
#include "dvq/geom/raycast.hpp"
#include "dvq/geom/smooth.hpp"
#include "dvq/net/rng.hpp"

using namespace dvq;
using geom::Face;
using geom::TriMesh;
using geom::Vec3;

namespace {

std::vector<Vec3> random_points(int n, net::Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) p = {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
  return pts;
}

// exhaustive scan with the same tie rule (ascending distance, lower index)
std::vector<int> knn_oracle(const Vec3& q, const std::vector<Vec3>& refs, int k) {
  std::vector<std::pair<double, int>> all;
  for (size_t i = 0; i < refs.size(); ++i) all.emplace_back(norm2(refs[i] - q), i);
  std::sort(all.begin(), all.end());
  std::vector<int> out;
  for (int i = 0; i < std::min<int>(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

}  // namespace

TEST_CASE("obj round trip preserves vertices and faces byte for byte") {
  TriMesh cube = geom::make_box({0.1, -0.2, 0.3}, {0.5, 0.25, 0.125}, 1);
  std::ostringstream first;
  geom::write_obj(cube, first);
  std::istringstream back(first.str());
  TriMesh reread = geom::read_obj(back, "cube.obj");
  std::ostringstream second;
  geom::write_obj(reread, second);
  CHECK(first.str() == second.str());
  REQUIRE(reread.vertex_count() == cube.vertex_count());
  for (int i = 0; i < cube.vertex_count(); ++i) CHECK(reread.vertices[i] == cube.vertices[i]);
  CHECK(reread.faces == cube.faces);
}

TEST_CASE("obj quad face is rejected naming the face") {
  std::istringstream in("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  try {
    geom::read_obj(in, "quad.obj");
    FAIL("expected parse error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("face 0") != std::string::npos);
    CHECK(msg.find("quad.obj:5") != std::string::npos);
  }
}

TEST_CASE("hand-built tetrahedron file parses to 4 vertices and 4 faces") {
  std::istringstream in(
      "v 1 1 1\nv 1 -1 -1\nv -1 1 -1\nv -1 -1 1\n"
      "f 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n");
  const TriMesh mesh = geom::read_obj(in, "tetra.obj");
  CHECK(mesh.vertex_count() == 4);
  CHECK(mesh.face_count() == 4);
  CHECK(mesh.normals.size() == 4);
}

TEST_CASE("ply ascii and binary round trips preserve doubles exactly") {
  TriMesh mesh = geom::make_icosphere({0.31, 0.77, -1.1}, 0.123456789123, 1);
  for (bool binary : {false, true}) {
    CAPTURE(binary);
    std::ostringstream out(std::ios::binary);
    geom::write_ply(mesh, out, binary);
    std::istringstream in(out.str());
    const TriMesh reread = geom::read_ply(in, "sphere.ply");
    REQUIRE(reread.vertex_count() == mesh.vertex_count());
    for (int i = 0; i < mesh.vertex_count(); ++i) {
      CHECK(reread.vertices[i] == mesh.vertices[i]);
      CHECK(reread.normals[i] == mesh.normals[i]);
    }
    CHECK(reread.faces == mesh.faces);
  }
}

TEST_CASE("vertex normals: planar square is +z, isolated vertex is zero") {
  TriMesh mesh;
  mesh.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {5, 5, 5}};
  mesh.faces = {{0, 1, 2}, {0, 2, 3}};
  geom::recompute_normals(mesh);
  for (int i = 0; i < 4; ++i) {
    CHECK(mesh.normals[i].z == doctest::Approx(1.0));
    CHECK(std::abs(mesh.normals[i].x) < 1e-15);
  }
  CHECK(mesh.normals[4] == Vec3{});
}

TEST_CASE("icosphere vertex normals align with the radial direction") {
  const TriMesh sphere = geom::make_icosphere({}, 1.0, 3);
  for (int i = 0; i < sphere.vertex_count(); ++i) {
    const double c = dot(sphere.normals[i], geom::normalized(sphere.vertices[i]));
    CHECK(std::acos(std::clamp(c, -1.0, 1.0)) < 2.0 * M_PI / 180.0);
  }
}

TEST_CASE("voxel downsample: full collapse and identity") {
  std::vector<Vec3> corners;
  for (int i = 0; i < 8; ++i)
    corners.push_back({static_cast<double>(i & 1), static_cast<double>((i >> 1) & 1),
                       static_cast<double>((i >> 2) & 1)});
  std::vector<Vec3> normals(8, Vec3{0, 0, 1});

  auto collapsed = geom::voxel_cluster_downsample(corners, normals, 2.0);
  REQUIRE(collapsed.points.size() == 1);
  CHECK(norm(collapsed.points[0] - Vec3{0.5, 0.5, 0.5}) < 1e-15);
  for (int m : collapsed.mapping.forward) CHECK(m == 0);

  auto identity = geom::voxel_cluster_downsample(corners, normals, 0.0);
  REQUIRE(identity.points.size() == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(identity.mapping.forward[i] == i);
    CHECK(identity.points[i] == corners[i]);
  }
}

TEST_CASE("voxel downsample count matches an exhaustive hashing oracle") {
  net::Rng rng(12345);
  const std::vector<Vec3> pts = random_points(3000, rng);
  std::vector<Vec3> normals(pts.size(), Vec3{1, 0, 0});
  const double voxel = 0.25;
  const auto result = geom::voxel_cluster_downsample(pts, normals, voxel);

  const Vec3 origin = geom::bounding_box(pts).min;
  std::set<std::array<long, 3>> occupied;
  for (const Vec3& p : pts) {
    const Vec3 q = (p - origin) / voxel;
    occupied.insert({static_cast<long>(std::floor(q.x)), static_cast<long>(std::floor(q.y)),
                     static_cast<long>(std::floor(q.z))});
  }
  CHECK(result.points.size() == occupied.size());

  // mapping is total and surjective onto contiguous coarse indices
  std::vector<int> hits(result.points.size(), 0);
  for (int m : result.mapping.forward) {
    REQUIRE(m >= 0);
    REQUIRE(m < static_cast<int>(result.points.size()));
    hits[m]++;
  }
  for (int h : hits) CHECK(h >= 1);
}

TEST_CASE("hierarchy: paper voxel schedule on a 0.16 m cube") {
  const TriMesh cube = geom::make_box({}, {0.08, 0.08, 0.08}, 2);
  const std::vector<double> schedule = geom::default_voxel_schedule(cube);
  REQUIRE(schedule.size() == 3);
  CHECK(schedule[0] == 0.0);
  CHECK(schedule[1] == doctest::Approx(0.01));
  CHECK(schedule[2] == doctest::Approx(0.02));

  const geom::MeshHierarchy h = geom::build_hierarchy(cube, schedule);
  CHECK(h.level_count() == 3);
  CHECK(h.levels[0].faces.has_value());
  CHECK(!h.levels[1].faces.has_value());
  CHECK(h.levels[0].points.size() >= h.levels[1].points.size());
  CHECK(h.levels[1].points.size() >= h.levels[2].points.size());
  CHECK(h.mappings.size() == 2);
}

TEST_CASE("hierarchy: single-level schedule is the original mesh") {
  const TriMesh sphere = geom::make_icosphere({}, 0.1, 1);
  const geom::MeshHierarchy h = geom::build_hierarchy(sphere, {0.0});
  CHECK(h.level_count() == 1);
  CHECK(h.mappings.empty());
  REQUIRE(h.levels[0].points.size() == sphere.vertices.size());
  for (size_t i = 0; i < sphere.vertices.size(); ++i)
    CHECK(h.levels[0].points[i] == sphere.vertices[i]);
}

TEST_CASE("hierarchy level-1 count equals the voxel occupancy oracle") {
  const TriMesh sphere = geom::make_icosphere({}, 0.1, 2);
  const double voxel = 0.1 / 4;
  const geom::MeshHierarchy h = geom::build_hierarchy(sphere, {0.0, voxel});
  const Vec3 origin = geom::bounding_box(sphere.vertices).min;
  std::set<std::array<long, 3>> occupied;
  for (const Vec3& p : sphere.vertices) {
    const Vec3 q = (p - origin) / voxel;
    occupied.insert({static_cast<long>(std::floor(q.x)), static_cast<long>(std::floor(q.y)),
                     static_cast<long>(std::floor(q.z))});
  }
  CHECK(h.levels[1].points.size() == occupied.size());
}

TEST_CASE("knn: query on a reference point and clamped k") {
  std::vector<Vec3> refs = {{0, 0, 0}, {1, 0, 0}, {0, 2, 0}};
  const auto hit = geom::knn({{1, 0, 0}}, refs, 1);
  CHECK(hit[0] == std::vector<int>{1});

  const auto all = geom::knn({{10, 0, 0}}, refs, 7);
  CHECK(all[0].size() == 3);
  CHECK(all[0] == std::vector<int>{1, 0, 2});
}

TEST_CASE("knn equals the exhaustive scan oracle, ties to the lower index") {
  net::Rng rng(99);
  const std::vector<Vec3> refs = random_points(500, rng);
  const std::vector<Vec3> queries = random_points(120, rng);
  const auto got = geom::knn(queries, refs, 16);
  for (size_t q = 0; q < queries.size(); ++q)
    CHECK(got[q] == knn_oracle(queries[q], refs, 16));

  // duplicate points force genuine distance ties
  std::vector<Vec3> dupes;
  for (int i = 0; i < 40; ++i) dupes.push_back({static_cast<double>(i % 5), 0, 0});
  const auto tied = geom::knn(queries, dupes, 8);
  for (size_t q = 0; q < queries.size(); ++q)
    CHECK(tied[q] == knn_oracle(queries[q], dupes, 8));
}

TEST_CASE("taubin: zero iterations is the identity") {
  const TriMesh sphere = geom::make_icosphere({}, 1.0, 2);
  const TriMesh same = geom::taubin_smooth(sphere, 0.5, -0.53, 0);
  for (int i = 0; i < sphere.vertex_count(); ++i) CHECK(same.vertices[i] == sphere.vertices[i]);
  CHECK(same.faces == sphere.faces);
}

TEST_CASE("taubin on a noised icosphere halves the laplacian objective") {
  TriMesh sphere = geom::make_icosphere({}, 0.1, 3);
  net::Rng rng(7);
  for (Vec3& v : sphere.vertices)
    v += Vec3{rng.normal(), rng.normal(), rng.normal()} * (0.02 * 0.1);
  geom::recompute_normals(sphere);
  const double before = geom::mesh_objectives(sphere).laplacian;
  const TriMesh smoothed = geom::taubin_smooth(sphere, 0.5, -0.53, 10);
  const double after = geom::mesh_objectives(smoothed).laplacian;
  CHECK(after <= 0.5 * before);
  CHECK(smoothed.faces == sphere.faces);
}

TEST_CASE("taubin leaves flat grid interiors in place") {
  // boundary motion propagates one ring per Laplacian step, so with
  // 3 iterations (6 steps) vertices more than 6 rings deep are untouched
  const TriMesh grid = geom::make_grid_square(16);
  const TriMesh smoothed = geom::taubin_smooth(grid, 0.5, -0.53, 3);
  for (int j = 7; j <= 9; ++j)
    for (int i = 7; i <= 9; ++i) {
      const int v = j * 17 + i;
      CHECK(norm(smoothed.vertices[v] - grid.vertices[v]) < 1e-12);
    }
}

TEST_CASE("mesh objectives: flat grid and sharp cube") {
  const TriMesh grid = geom::make_grid_square(5);
  const geom::MeshObjectives flat = geom::mesh_objectives(grid);
  CHECK(flat.normal_consistency < 1e-12);

  const TriMesh cube = geom::make_box({}, {0.5, 0.5, 0.5}, 1);
  const auto pairs = geom::adjacent_face_pairs(cube);
  std::vector<Vec3> face_normals(cube.face_count());
  for (int f = 0; f < cube.face_count(); ++f)
    face_normals[f] = geom::normalized(cross(cube.vertices[cube.faces[f][1]] - cube.vertices[cube.faces[f][0]],
                                             cube.vertices[cube.faces[f][2]] - cube.vertices[cube.faces[f][0]]));
  for (const auto& [a, b] : pairs) {
    const double v = 1.0 - dot(face_normals[a], face_normals[b]);
    // every adjacent pair on a unit-subdivision cube is coplanar (0) or a 90-degree crease (1)
    CHECK((std::abs(v) < 1e-12 || std::abs(v - 1.0) < 1e-12));
  }
  const geom::MeshObjectives sharp = geom::mesh_objectives(cube);
  CHECK(sharp.laplacian > 0);
}

TEST_CASE("mesh objectives match a direct summation oracle") {
  const TriMesh mesh = geom::make_ellipsoid({}, {0.1, 0.07, 0.05}, 2);
  const geom::MeshObjectives got = geom::mesh_objectives(mesh);

  // independent summation
  const auto adj = geom::vertex_adjacency(mesh);
  double lap = 0;
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    Vec3 mean;
    for (int j : adj[i]) mean += mesh.vertices[j];
    if (!adj[i].empty()) {
      mean = mean / static_cast<double>(adj[i].size());
      lap += norm(mean - mesh.vertices[i]);
    }
  }
  lap /= mesh.vertex_count();
  CHECK(std::abs(lap - got.laplacian) < 1e-12);
}

TEST_CASE("chamfer: identity, two points, symmetry, brute-force oracle") {
  net::Rng rng(31);
  const std::vector<Vec3> a = random_points(200, rng);
  CHECK(geom::squared_chamfer_distance(a, a) == 0.0);

  const std::vector<Vec3> p = {{0, 0, 0}};
  const std::vector<Vec3> q = {{0, 0, 0.3}};
  CHECK(geom::squared_chamfer_distance(p, q) == doctest::Approx(2 * 0.09).epsilon(1e-12));

  const std::vector<Vec3> b = random_points(180, rng);
  const double ab = geom::squared_chamfer_distance(a, b);
  const double ba = geom::squared_chamfer_distance(b, a);
  CHECK(ab == ba);

  double oracle = 0;
  double sum = 0;
  for (const Vec3& x : a) {
    double best = 1e300;
    for (const Vec3& y : b) best = std::min(best, norm2(x - y));
    sum += best;
  }
  oracle += sum / a.size();
  sum = 0;
  for (const Vec3& y : b) {
    double best = 1e300;
    for (const Vec3& x : a) best = std::min(best, norm2(x - y));
    sum += best;
  }
  oracle += sum / b.size();
  CHECK(std::abs(ab - oracle) < 1e-12);

  CHECK_THROWS(geom::squared_chamfer_distance({}, a));
}

TEST_CASE("ray cast: analytic square hit and parallel miss") {
  TriMesh square;
  square.vertices = {{-1, -1, 0}, {1, -1, 0}, {1, 1, 0}, {-1, 1, 0}};
  square.faces = {{0, 1, 2}, {0, 2, 3}};
  geom::recompute_normals(square);

  const auto hit = geom::ray_cast({0, 0, -1}, {0, 0, 1}, square);
  REQUIRE(hit.has_value());
  CHECK(hit->t == doctest::Approx(1.0).epsilon(1e-12));

  const auto miss = geom::ray_cast({0, 0, 1}, {1, 0, 0}, square);
  CHECK(!miss.has_value());
}

TEST_CASE("ray cast matches the all-triangles oracle on 1000 random rays") {
  const TriMesh sphere = geom::make_icosphere({}, 0.5, 2);
  net::Rng rng(17);
  for (int r = 0; r < 1000; ++r) {
    const Vec3 origin{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
    Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
    if (norm(dir) < 1e-9) continue;
    const auto fast = geom::ray_cast(origin, dir, sphere);

    std::optional<double> best;
    for (const Face& f : sphere.faces) {
      const auto t = geom::ray_triangle(origin, dir, sphere.vertices[f[0]],
                                        sphere.vertices[f[1]], sphere.vertices[f[2]]);
      if (t && *t > 1e-9 && (!best || *t < *best)) best = *t;
    }
    CHECK(fast.has_value() == best.has_value());
    if (fast && best) CHECK(std::abs(fast->t - *best) < 1e-9);
  }
}

TEST_CASE("all operation outputs keep unit or zero normals") {
  const TriMesh sphere = geom::make_icosphere({}, 0.07, 2);
  auto check_normals = [](const std::vector<Vec3>& normals) {
    for (const Vec3& n : normals) {
      const double len = norm(n);
      CHECK((len == 0.0 || std::abs(len - 1.0) <= 1e-6));
    }
  };
  check_normals(sphere.normals);
  check_normals(geom::taubin_smooth(sphere).normals);
  const auto down = geom::voxel_cluster_downsample(sphere.vertices, sphere.normals, 0.02);
  check_normals(down.normals);
  const geom::MeshHierarchy h = geom::build_hierarchy(sphere, geom::default_voxel_schedule(sphere));
  for (const auto& level : h.levels) check_normals(level.normals);
}

TEST_CASE("inside mask: point probes agree across axes on primitives") {
  const TriMesh box = geom::make_box({}, {0.05, 0.04, 0.03}, 2);
  CHECK(geom::point_inside(box, {0, 0, 0}));
  CHECK(!geom::point_inside(box, {0.2, 0, 0}));
  net::Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Vec3 p{rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08)};
    CHECK(geom::parity_consistent(box, p));
  }
}

TEST_CASE("inside mask treats overlapping closed components as a union") {
  const TriMesh a = geom::make_box({}, {0.05, 0.05, 0.05}, 1);
  const TriMesh b = geom::make_icosphere({0.05, 0, 0}, 0.03, 1);
  const TriMesh merged = geom::merge_meshes(a, b);
  // a point inside both solids must still count as inside
  CHECK(geom::point_inside(merged, {0.04, 0, 0}));
  CHECK(geom::point_inside(merged, {0.07, 0, 0}));  // sphere only
  CHECK(geom::point_inside(merged, {-0.04, 0, 0}));  // box only
  CHECK(!geom::point_inside(merged, {0.12, 0, 0}));
}

TEST_CASE("mesh io validates face indices") {
  std::istringstream in("v 0 0 0\nv 1 0 0\nf 1 2 5\n");
  CHECK_THROWS(geom::read_obj(in, "bad.obj"));
}
