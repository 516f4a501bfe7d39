#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "dvq/app/config.hpp"
#include "dvq/app/run.hpp"
#include "dvq/app/synth.hpp"
#include "dvq/contact/contact.hpp"
#include "dvq/geom/inside.hpp"
#include "dvq/geom/mesh_io.hpp"
#include "dvq/geom/raycast.hpp"
#include "dvq/metrics/metrics.hpp"

using namespace dvq;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("config files parse with includes and env overrides") {
  TempDir tmp("dvq_cfg_test");
  {
    std::ofstream base(tmp.path / "base.cfg");
    base << "# defaults\nseed = 11\ntrain.lr = 0.01\nfeature_dim = 32\n";
  }
  {
    std::ofstream main(tmp.path / "main.cfg");
    main << "include base.cfg\ntrain.lr = 0.002\n";
  }
  app::KeyValues kv = app::parse_config_file(tmp.path / "main.cfg");
  CHECK(kv.at("seed") == "11");
  CHECK(kv.at("train.lr") == "0.002");  // later key wins

  setenv("DVQ_TRAIN_LR", "0.5", 1);
  app::apply_env_overrides(kv);
  unsetenv("DVQ_TRAIN_LR");
  CHECK(kv.at("train.lr") == "0.5");

  app::RunConfig cfg;
  app::apply(kv, cfg);
  CHECK(cfg.seed == 11);
  CHECK(cfg.train.lr == 0.5);
  CHECK(cfg.pipeline.feature_dim == 32);
  CHECK(cfg.pipeline.codebook.dim == 32);  // tracks feature_dim

  CHECK_THROWS(app::apply({{"no.such.key", "1"}}, cfg));
}

TEST_CASE("config hash is stable and order independent") {
  app::KeyValues a{{"x", "1"}, {"y", "2"}};
  app::KeyValues b{{"y", "2"}, {"x", "1"}};
  CHECK(app::config_hash(a) == app::config_hash(b));
  b["y"] = "3";
  CHECK(app::config_hash(a) != app::config_hash(b));
}

TEST_CASE("synthetic objects are deterministic, watertight and size bounded") {
  TempDir tmp("dvq_synth_obj");
  const auto paths = app::synth_objects(tmp.path / "objects", 42, 10);
  REQUIRE(paths.size() == 10);

  // byte-identical a second time
  TempDir tmp2("dvq_synth_obj2");
  app::synth_objects(tmp2.path / "objects", 42, 10);
  for (const std::string& rel : paths)
    CHECK(read_file(tmp.path / rel) == read_file(tmp2.path / rel));

  net::Rng rng(1);
  for (const std::string& rel : paths) {
    const geom::TriMesh mesh = geom::read_mesh(tmp.path / rel);
    const geom::Aabb box = geom::bounding_box(mesh.vertices);
    const geom::Vec3 ext = box.extent();
    const double longest = std::max({ext.x, ext.y, ext.z});
    CHECK(longest >= 0.04 - 1e-9);
    CHECK(longest <= 0.20 + 1e-9);
    // parity probes agree across the three axes
    for (int p = 0; p < 100; ++p) {
      const geom::Vec3 probe{box.min.x + ext.x * rng.uniform(),
                             box.min.y + ext.y * rng.uniform(),
                             box.min.z + ext.z * rng.uniform()};
      CHECK(geom::parity_consistent(mesh, probe));
    }
  }
}

TEST_CASE("synthetic grasps contact by construction and bound penetration") {
  TempDir tmp("dvq_synth_grasp");
  const auto paths = app::synth_objects(tmp.path / "objects", 7, 4);
  const hand::HandModel model = hand::HandModel::build();
  app::GraspSynthStats stats;
  const auto grasps =
      app::synth_grasps(tmp.path, paths, model, 7, 2, contact::kContactThreshold, &stats);
  CHECK(stats.requested == 8);
  CHECK(stats.emitted >= 6);  // closure may skip awkward geometry

  for (const auto& g : grasps) {
    CHECK(!g.contact_indices.empty());  // touching by construction
    const geom::TriMesh object = geom::read_mesh(tmp.path / g.object_path);
    const hand::HandMesh hand_mesh = model.forward(g.posture, g.position);
    CHECK(contact::penetration_volume(hand_mesh.mesh, object) <= 10.0);
    for (double b : g.posture.beta) CHECK(std::abs(b) <= M_PI);
  }

  // determinism
  const auto again =
      app::synth_grasps(tmp.path, paths, model, 7, 2, contact::kContactThreshold, nullptr);
  REQUIRE(again.size() == grasps.size());
  for (size_t i = 0; i < grasps.size(); ++i) {
    CHECK(again[i].posture.beta == grasps[i].posture.beta);
    CHECK(again[i].position.gamma == grasps[i].position.gamma);
    CHECK(again[i].contact_indices == grasps[i].contact_indices);
  }
}

TEST_CASE("deformation records: press bounds and hod improvement") {
  TempDir tmp("dvq_synth_deform");
  const auto paths = app::synth_objects(tmp.path / "objects", 19, 4);
  const hand::HandModel model = hand::HandModel::build();
  const auto grasps =
      app::synth_grasps(tmp.path, paths, model, 19, 1, contact::kContactThreshold, nullptr);
  REQUIRE(!grasps.empty());
  const auto records =
      app::synth_deformations(tmp.path, grasps, model, 19, 0.006, contact::kContactThreshold);
  REQUIRE(records.size() == grasps.size());

  int improved = 0, with_dent = 0;
  for (const auto& r : records) {
    const geom::TriMesh object = geom::read_mesh(tmp.path / r.object_path);
    const hand::HandMesh pressed = model.forward(r.posture, r.position);
    const contact::ContactReport rep = contact::contact_quantify(pressed.mesh, object);
    double max_depth = 0;
    for (double d : rep.depths) max_depth = std::max(max_depth, d);
    for (const geom::Vec3& d : r.displacements) {
      CHECK(norm(d) <= r.amplitude + 1e-12);
    }
    CHECK(r.amplitude <= max_depth + 1e-9);

    if (r.amplitude < 1e-6) continue;
    ++with_dent;
    std::vector<bool> map(object.vertex_count(), false);
    for (int i : r.contact_indices) map[i] = true;
    geom::TriMesh deformed = object;
    for (int i = 0; i < object.vertex_count(); ++i) deformed.vertices[i] += r.displacements[i];
    geom::recompute_normals(deformed);
    const auto before = metrics::hod_metrics(object, pressed.mesh, map, object);
    const auto after = metrics::hod_metrics(deformed, pressed.mesh, map, object);
    if (before.hod_distance && after.hod_distance &&
        *after.hod_distance < *before.hod_distance)
      ++improved;
  }
  CHECK(with_dent >= 1);
  CHECK(improved == with_dent);  // gt deformation always moves toward the hand
}

TEST_CASE("grasp with no penetration yields zero displacements") {
  TempDir tmp("dvq_synth_nopen");
  const auto paths = app::synth_objects(tmp.path / "objects", 3, 1);
  const hand::HandModel model = hand::HandModel::build();
  // a grasp parked far from the object
  pipeline::GraspRecord far;
  far.object_path = paths[0];
  far.position.gamma = {1.0, 1.0, 1.0};
  far.approach = {0, 0, 1};
  const auto records =
      app::synth_deformations(tmp.path, {far}, model, 3, 0.0, contact::kContactThreshold);
  REQUIRE(records.size() == 1);
  CHECK(records[0].amplitude == 0.0);
  for (const geom::Vec3& d : records[0].displacements) CHECK(norm(d) == 0.0);
}

TEST_CASE("run dispatch: mesh-info works, unknown command throws") {
  TempDir tmp("dvq_run");
  const geom::TriMesh mesh = geom::make_icosphere({}, 0.05, 1);
  geom::write_mesh(mesh, tmp.path / "m.ply", geom::MeshFormat::PlyBinary);
  app::RunConfig cfg;
  cfg.mesh_path = (tmp.path / "m.ply").string();
  CHECK(app::run("mesh-info", cfg) == 0);
  CHECK_THROWS(app::run("bogus", cfg));
}

TEST_CASE("eval on the quality csv exits cleanly and writes a report") {
  TempDir tmp("dvq_eval");
  app::RunConfig cfg;
  cfg.out_dir = tmp.path / "out";
  cfg.quality_csv =
      (fs::path(__FILE__).parent_path() / "fixtures" / "quality_rows.csv").string();
  CHECK(app::run("eval", cfg) == 0);
  CHECK(fs::exists(cfg.out_dir / "eval_report.json"));
  CHECK(fs::exists(cfg.out_dir / "eval_report.csv"));
}

TEST_CASE("parallel synth matches the serial output byte for byte") {
  TempDir serial("dvq_jobs1");
  TempDir parallel("dvq_jobs4");
  const auto a = app::synth_objects(serial.path / "objects", 5, 8, 1);
  const auto b = app::synth_objects(parallel.path / "objects", 5, 8, 4);
  REQUIRE(a == b);
  for (const std::string& rel : a)
    CHECK(read_file(serial.path / rel) == read_file(parallel.path / rel));
}
