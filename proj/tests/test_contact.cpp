#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dvq/contact/contact.hpp"
#include "dvq/geom/primitives.hpp"
#include "dvq/net/rng.hpp"
#include "dvq/net/store.hpp"

using namespace dvq;
using geom::Face;
using geom::TriMesh;
using geom::Vec3;

namespace {

// rectangle [x0,x1]x[y0,y1] at height z, subdivided n x n, face-disjoint
// vertices so every vertex normal is exactly the face normal (sign of `up`)
TriMesh make_plate(double x0, double x1, double y0, double y1, double z, int n, bool up) {
  TriMesh mesh;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double ax = x0 + (x1 - x0) * i / n, bx = x0 + (x1 - x0) * (i + 1) / n;
      const double ay = y0 + (y1 - y0) * j / n, by = y0 + (y1 - y0) * (j + 1) / n;
      const int base = mesh.vertex_count();
      mesh.vertices.push_back({ax, ay, z});
      mesh.vertices.push_back({bx, ay, z});
      mesh.vertices.push_back({bx, by, z});
      mesh.vertices.push_back({ax, by, z});
      if (up) {
        mesh.faces.push_back({base, base + 1, base + 2});
        mesh.faces.push_back({base, base + 2, base + 3});
      } else {
        mesh.faces.push_back({base, base + 2, base + 1});
        mesh.faces.push_back({base, base + 3, base + 2});
      }
    }
  }
  geom::recompute_normals(mesh);
  return mesh;
}

// slab "hand" occupying z in [z_lo, z_hi]: bottom face normals point -z,
// top face normals +z
TriMesh make_slab(double half, double z_lo, double z_hi, int n) {
  TriMesh bottom = make_plate(-half, half, -half, half, z_lo, n, /*up=*/false);
  TriMesh top = make_plate(-half, half, -half, half, z_hi, n, /*up=*/true);
  return geom::merge_meshes(bottom, top);
}

// object filling z <= top: top face (normals +z) plus a floor far below
TriMesh make_object_block(double half, double top, int n) {
  TriMesh top_face = make_plate(-half, half, -half, half, top, n, /*up=*/true);
  TriMesh bottom_face = make_plate(-half, half, -half, half, top - 0.2, n, /*up=*/false);
  return geom::merge_meshes(top_face, bottom_face);
}

}  // namespace

TEST_CASE("separated meshes facing each other produce an empty report") {
  // d_ji < 0 flags the object lying behind the hand surface, so two parted
  // surfaces facing one another report nothing
  TriMesh hand = make_plate(-0.05, 0.05, -0.05, 0.05, 0.1, 2, /*up=*/false);
  TriMesh object = make_plate(-0.05, 0.05, -0.05, 0.05, 0.0, 2, /*up=*/true);
  const contact::ContactReport r = contact::contact_quantify(hand, object);
  CHECK(!r.any_contact());
  for (bool b : r.hand_contact) CHECK(!b);
  for (bool b : r.object_penetrated) CHECK(!b);
  for (double d : r.depths) CHECK(d == 0.0);
}

TEST_CASE("analytic slab fixture: depth equals 0.005 within 1e-6") {
  // slab hand over an object whose top face lies inside it
  const TriMesh hand = make_slab(0.08, 0.0, 0.01, 8);
  const TriMesh object = make_object_block(0.06, 0.005, 8);
  const contact::ContactReport r = contact::contact_quantify(hand, object);

  int penetrated = 0;
  for (size_t i = 0; i < object.vertices.size(); ++i) {
    if (object.vertices[i].z != 0.005) continue;  // skip the floor plate
    REQUIRE(r.object_penetrated[i]);
    CHECK(std::abs(r.depths[i] - 0.005) <= 1e-6);
    ++penetrated;
  }
  CHECK(penetrated > 0);
}

TEST_CASE("slab depth is stable within 1e-4 under 2x refinement") {
  auto run = [](int n) {
    const TriMesh hand = make_slab(0.08, 0.0, 0.01, n);
    const TriMesh object = make_object_block(0.06, 0.005, n);
    const contact::ContactReport r = contact::contact_quantify(hand, object);
    double mean = 0;
    int count = 0;
    for (size_t i = 0; i < object.vertices.size(); ++i)
      if (object.vertices[i].z == 0.005 && r.object_penetrated[i]) {
        mean += r.depths[i];
        ++count;
      }
    return mean / count;
  };
  CHECK(std::abs(run(8) - run(16)) < 1e-4);
}

TEST_CASE("no stage-1 contact means no stage-2 penetration") {
  // hand surface faces the object so no vertex passes the sign test
  TriMesh hand = make_plate(-0.05, 0.05, -0.05, 0.05, 0.02, 4, /*up=*/false);
  TriMesh object = make_object_block(0.05, 0.0, 4);
  const contact::ContactReport r = contact::contact_quantify(hand, object);
  bool any_hand = false;
  for (bool b : r.hand_contact) any_hand = any_hand || b;
  REQUIRE(!any_hand);
  for (bool b : r.object_penetrated) CHECK(!b);
}

TEST_CASE("depth bounded by the hand bounding box diameter") {
  const TriMesh hand = make_slab(0.08, 0.0, 0.01, 8);
  const TriMesh object = make_object_block(0.06, 0.005, 8);
  const contact::ContactReport r = contact::contact_quantify(hand, object);
  const Vec3 ext = geom::bounding_box(hand.vertices).extent();
  const double diameter = norm(ext);
  for (size_t i = 0; i < r.depths.size(); ++i) {
    if (r.object_penetrated[i]) CHECK(r.depths[i] <= diameter + 1e-12);
    else CHECK(r.depths[i] == 0.0);
  }
}

TEST_CASE("penetration volume: disjoint, overlapping cubes, embedded sphere") {
  const TriMesh a = geom::make_box({}, {0.05, 0.05, 0.05}, 2);
  TriMesh far = a;
  geom::translate(far, {1, 0, 0});
  CHECK(contact::penetration_volume(a, far) == 0.0);

  // two 10 cm cubes overlapping 5 cm along x -> 500 cm^3
  TriMesh b = geom::make_box({0.05, 0, 0}, {0.05, 0.05, 0.05}, 2);
  const double cubes = contact::penetration_volume(a, b);
  CHECK(std::abs(cubes - 500.0) <= 15.0);  // 3%

  // 3 cm sphere fully inside a big cube -> (4/3) pi 27 cm^3
  const TriMesh big = geom::make_box({}, {0.08, 0.08, 0.08}, 2);
  const TriMesh sphere = geom::make_icosphere({}, 0.03, 3);
  const double ball = contact::penetration_volume(big, sphere);
  const double expect = 4.0 / 3.0 * M_PI * 27.0;
  CHECK(std::abs(ball - expect) <= expect * 0.03);
}

TEST_CASE("penetration volume is symmetric and monotone under nesting") {
  const TriMesh outer = geom::make_box({}, {0.06, 0.05, 0.04}, 2);
  const TriMesh inner = geom::make_box({0.01, 0, 0}, {0.03, 0.03, 0.03}, 2);
  const TriMesh small = geom::make_box({0.01, 0, 0}, {0.02, 0.02, 0.02}, 2);
  const double ab = contact::penetration_volume(outer, inner);
  const double ba = contact::penetration_volume(inner, outer);
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  CHECK(contact::penetration_volume(outer, small) <= ab);
}

TEST_CASE("contact losses: empty gt map, no penetration, perfect overlap") {
  const TriMesh hand = make_slab(0.08, 0.0, 0.01, 4);
  const TriMesh object = make_object_block(0.06, 0.005, 4);
  const contact::ContactReport r = contact::contact_quantify(hand, object);
  std::vector<int> candidates;
  for (int i = 0; i < hand.vertex_count(); ++i) candidates.push_back(i);

  SUBCASE("empty map defines L_m = 0") {
    std::vector<bool> empty_map(object.vertex_count(), false);
    const auto losses = contact::contact_losses(r, hand, object, empty_map, candidates);
    CHECK(losses.l_m == 0.0);
    CHECK(losses.l_c == 0.0);
  }
  SUBCASE("perfect map overlap contributes lambda_m") {
    const auto losses = contact::contact_losses(r, hand, object, r.contact_map, candidates);
    CHECK(losses.l_m == 1.0);
    // with the default lambdas the agreement term contributes -50
    CHECK(losses.l_contact ==
          doctest::Approx(-50.0 + 1500.0 * losses.l_c + 5.0 * losses.l_p));
  }
}

TEST_CASE("disjoint fixture has zero L_c candidates distance and zero L_p") {
  TriMesh hand = make_plate(-0.05, 0.05, -0.05, 0.05, 0.1, 2, /*up=*/false);
  TriMesh object = make_plate(-0.05, 0.05, -0.05, 0.05, 0.0, 2, /*up=*/true);
  const contact::ContactReport r = contact::contact_quantify(hand, object);
  std::vector<int> candidates{0, 1, 2, 3};
  std::vector<bool> map(object.vertex_count(), false);
  const auto losses = contact::contact_losses(r, hand, object, map, candidates);
  CHECK(losses.l_p == 0.0);
  CHECK(losses.l_c == 0.0);
  CHECK(losses.l_m == 0.0);
  CHECK(losses.l_contact == 0.0);
}

TEST_CASE("30-vertex toy scene matches a direct double-loop oracle") {
  net::Rng rng(7);
  TriMesh hand = geom::make_icosphere({0.02, 0, 0}, 0.03, 0);  // 12 vertices
  TriMesh object = geom::make_icosphere({-0.02, 0, 0}, 0.03, 0);
  const contact::ContactReport r = contact::contact_quantify(hand, object);

  std::vector<bool> gt_map(object.vertex_count(), false);
  for (int i = 0; i < object.vertex_count(); i += 2) gt_map[i] = true;
  std::vector<int> candidates;
  for (int i = 0; i < hand.vertex_count(); i += 3) candidates.push_back(i);

  const auto got = contact::contact_losses(r, hand, object, gt_map, candidates);

  double l_c = 0;
  for (int i = 0; i < object.vertex_count(); ++i) {
    if (!gt_map[i]) continue;
    double best = 1e300;
    for (int j : candidates) best = std::min(best, norm(object.vertices[i] - hand.vertices[j]));
    l_c += best;
  }
  double l_p = 0;
  for (int j = 0; j < hand.vertex_count(); ++j) {
    if (!r.hand_contact[j]) continue;
    double best = 1e300;
    for (int i = 0; i < object.vertex_count(); ++i)
      best = std::min(best, norm2(hand.vertices[j] - object.vertices[i]));
    l_p += best;
  }
  int agree = 0, total = 0;
  for (int i = 0; i < object.vertex_count(); ++i) {
    if (!gt_map[i]) continue;
    ++total;
    agree += r.contact_map[i] ? 1 : 0;
  }
  const double l_m = total ? double(agree) / total : 0.0;

  CHECK(std::abs(got.l_c - l_c) < 1e-12);
  CHECK(std::abs(got.l_p - l_p) < 1e-12);
  CHECK(got.l_m == l_m);
  CHECK(std::abs(got.l_contact - (-50.0 * l_m + 1500.0 * l_c + 5.0 * l_p)) < 1e-9);
}

TEST_CASE("tape contact losses agree with the plain values and differentiate") {
  TriMesh hand = geom::make_icosphere({0.02, 0, 0}, 0.03, 0);
  const TriMesh object = geom::make_icosphere({-0.02, 0, 0}, 0.03, 0);
  const contact::ContactReport r = contact::contact_quantify(hand, object);
  std::vector<bool> gt_map(object.vertex_count(), true);
  std::vector<int> candidates;
  for (int i = 0; i < hand.vertex_count(); ++i) candidates.push_back(i);
  const auto plain = contact::contact_losses(r, hand, object, gt_map, candidates);

  net::Tape tape;
  net::DenseArray hv(hand.vertex_count(), 3);
  for (int i = 0; i < hand.vertex_count(); ++i)
    for (int c = 0; c < 3; ++c) hv(i, c) = hand.vertices[i][c];
  net::Var hand_var = tape.leaf(hv, true);
  const auto vars = contact::contact_losses_tape(tape, hand_var, r, object, gt_map, candidates);
  CHECK(tape.val(vars.l_c).item() == doctest::Approx(plain.l_c).epsilon(1e-12));
  CHECK(tape.val(vars.l_p).item() == doctest::Approx(plain.l_p).epsilon(1e-12));
  CHECK(tape.val(vars.l_m).item() == plain.l_m);
  tape.backward(vars.l_contact);
  bool any = false;
  for (double g : tape.grad_of(hand_var).data) any = any || g != 0.0;
  CHECK(any);
}

TEST_CASE("report exports one json line per vertex") {
  TriMesh hand = geom::make_icosphere({0.02, 0, 0}, 0.02, 0);
  const TriMesh object = geom::make_icosphere({-0.02, 0, 0}, 0.02, 0);
  const contact::ContactReport r = contact::contact_quantify(hand, object);
  const auto path = std::filesystem::temp_directory_path() / "dvq_contact.jsonl";
  contact::write_report_jsonl(r, path);

  std::ifstream in(path);
  std::string line;
  int object_rows = 0, hand_rows = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.at("kind") == "object") {
      ++object_rows;
      CHECK(j.contains("depth"));
      CHECK(j.contains("penetrated"));
    } else {
      ++hand_rows;
    }
  }
  CHECK(object_rows == object.vertex_count());
  CHECK(hand_rows == hand.vertex_count());
  std::filesystem::remove(path);
}

TEST_CASE("contact_quantify requires normals") {
  TriMesh hand = geom::make_icosphere({}, 0.02, 0);
  TriMesh object = hand;
  object.normals.clear();
  CHECK_THROWS(contact::contact_quantify(hand, object));
}
