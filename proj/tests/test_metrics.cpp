#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dvq/geom/primitives.hpp"
#include "dvq/geom/raycast.hpp"
#include "dvq/metrics/metrics.hpp"
#include "dvq/net/rng.hpp"

using namespace dvq;
using geom::TriMesh;
using geom::Vec3;

namespace {
std::filesystem::path fixture_dir() {
  // tests run from the build tree; the fixture lives next to the sources
  return std::filesystem::path(__FILE__).parent_path() / "fixtures";
}
}  // namespace

TEST_CASE("uniform occupancy over 20 clusters reaches entropy ln 20") {
  // 20 tight, well-separated planted clusters with equal counts
  std::vector<std::vector<double>> points;
  net::Rng rng(1);
  for (int c = 0; c < 20; ++c)
    for (int i = 0; i < 25; ++i) {
      std::vector<double> p(5, 0.0);
      p[0] = c * 100.0;
      for (double& v : p) v += rng.uniform(-0.01, 0.01);
      points.push_back(p);
    }
  const metrics::Diversity d = metrics::diversity(points, 20, 7);
  CHECK(std::abs(d.entropy - std::log(20.0)) <= 1e-9);
  CHECK(d.cluster_size < 0.05);
}

TEST_CASE("identical samples collapse to zero entropy and zero radius") {
  std::vector<std::vector<double>> points(50, std::vector<double>(4, 1.25));
  const metrics::Diversity d = metrics::diversity(points, 20, 3);
  CHECK(d.entropy == 0.0);
  CHECK(d.cluster_size == 0.0);
}

TEST_CASE("planted gaussian mixture occupancy recovered within 5%") {
  net::Rng rng(5);
  std::vector<std::vector<double>> points;
  const int per_cluster = 40;
  for (int c = 0; c < 20; ++c) {
    std::vector<double> center(6);
    for (double& v : center) v = rng.uniform(-1, 1) * 50.0;
    for (int i = 0; i < per_cluster; ++i) {
      std::vector<double> p = center;
      for (double& v : p) v += rng.normal() * 0.5;
      points.push_back(p);
    }
  }
  const metrics::KMeansResult km = metrics::kmeans(points, 20, 11);
  std::vector<int> counts(20, 0);
  for (int a : km.assignment) counts[a]++;
  for (int c = 0; c < 20; ++c)
    CHECK(std::abs(counts[c] - per_cluster) <= per_cluster * 0.05);
}

TEST_CASE("diversity rejects fewer samples than clusters") {
  std::vector<std::vector<double>> points(5, std::vector<double>(3, 0.0));
  CHECK_THROWS(metrics::diversity(points, 20, 1));
}

TEST_CASE("quality index reproduces the published trade-off rows") {
  CHECK(metrics::quality_index(4.39, 2.33) == doctest::Approx(2.95).epsilon(0.01));
  CHECK(metrics::quality_index(7.23, 2.78) == doctest::Approx(4.12).epsilon(0.01));
  CHECK(metrics::quality_index(0, 0) == 0.0);
}

TEST_CASE("all 22 quality rows match within 0.02") {
  const auto rows = metrics::read_quality_csv(fixture_dir() / "quality_rows.csv");
  REQUIRE(rows.size() == 22);
  for (const auto& r : rows) {
    const double q = metrics::quality_index(r.penetration, r.disp);
    CHECK(std::abs(q - r.printed_q) <= 0.02);
  }
}

TEST_CASE("hod metrics: identity deformation, contact construction, oracle") {
  const TriMesh object = geom::make_icosphere({}, 0.05, 2);
  const TriMesh hand = geom::make_box({0, 0, 0.08}, {0.04, 0.04, 0.03}, 2);
  std::vector<bool> map(object.vertex_count(), false);
  for (int i = 0; i < object.vertex_count(); ++i)
    if (object.vertices[i].z > 0.03) map[i] = true;

  SUBCASE("deformed == undeformed gives zero masked chamfer") {
    const auto m = metrics::hod_metrics(object, hand, map, object);
    CHECK(m.masked_chamfer == 0.0);
    REQUIRE(m.hod_distance.has_value());
    CHECK(*m.hod_distance > 0.0);
  }

  SUBCASE("pushing the contact region onto the hand drives hod to zero") {
    TriMesh deformed = object;
    for (int i = 0; i < object.vertex_count(); ++i)
      if (map[i]) {
        // project onto the hand's bottom face z = 0.05
        deformed.vertices[i].z = 0.05;
        deformed.vertices[i].x = std::clamp(deformed.vertices[i].x, -0.04, 0.04);
        deformed.vertices[i].y = std::clamp(deformed.vertices[i].y, -0.04, 0.04);
      }
    const auto m = metrics::hod_metrics(deformed, hand, map, object);
    REQUIRE(m.hod_distance.has_value());
    CHECK(*m.hod_distance < 1e-9);
    // the masked chamfer ignores arbitrary contact-region deformation
    const auto base = metrics::hod_metrics(object, hand, map, object);
    CHECK(m.masked_chamfer == base.masked_chamfer);
  }

  SUBCASE("double-loop oracle over the contact region") {
    const auto m = metrics::hod_metrics(object, hand, map, object);
    double sum = 0;
    int count = 0;
    std::vector<Vec3> free_d, free_u;
    for (int i = 0; i < object.vertex_count(); ++i) {
      if (map[i]) {
        sum += geom::point_mesh_distance(object.vertices[i], hand);
        ++count;
      } else {
        free_d.push_back(object.vertices[i]);
        free_u.push_back(object.vertices[i]);
      }
    }
    CHECK(*m.hod_distance == doctest::Approx(sum / count).epsilon(1e-12));
    CHECK(m.masked_chamfer ==
          doctest::Approx(geom::squared_chamfer_distance(free_d, free_u)).epsilon(1e-12));
  }

  SUBCASE("empty contact region reports hod as missing") {
    std::vector<bool> none(object.vertex_count(), false);
    const auto m = metrics::hod_metrics(object, hand, none, object);
    CHECK(!m.hod_distance.has_value());
  }
}

TEST_CASE("contact ratio arithmetic") {
  CHECK(metrics::contact_ratio({true, true, true}) == 100.0);
  CHECK(metrics::contact_ratio({false, false}) == 0.0);
  CHECK(metrics::contact_ratio({true, true, true, false}) == 75.0);
  CHECK_THROWS(metrics::contact_ratio({}));
}

TEST_CASE("eval report serializes to json and fixed-column csv") {
  metrics::EvalReport r;
  r.contact_ratio_pct = 87.5;
  r.entropy = 2.31;
  r.quality_index = 3.05;
  // hod left missing on purpose
  const auto dir = std::filesystem::temp_directory_path();
  metrics::write_report_json(r, dir / "dvq_report.json");
  metrics::write_report_csv(r, dir / "dvq_report.csv");

  std::ifstream jin(dir / "dvq_report.json");
  nlohmann::json j;
  jin >> j;
  CHECK(j.at("contact_ratio_pct").get<double>() == 87.5);
  CHECK(j.at("hod_distance").is_null());

  std::ifstream cin(dir / "dvq_report.csv");
  std::string header, row;
  std::getline(cin, header);
  std::getline(cin, row);
  CHECK(header ==
        "contact_ratio_pct,penetration_volume_cm3,entropy,cluster_size,quality_index,"
        "hod_distance,masked_chamfer,laplacian_objective");
  CHECK(row.substr(0, 5) == "87.5,");
  std::filesystem::remove(dir / "dvq_report.json");
  std::filesystem::remove(dir / "dvq_report.csv");
}

TEST_CASE("kmeans is deterministic under a fixed seed") {
  net::Rng rng(13);
  std::vector<std::vector<double>> points;
  for (int i = 0; i < 200; ++i)
    points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
  const auto a = metrics::kmeans(points, 20, 99);
  const auto b = metrics::kmeans(points, 20, 99);
  CHECK(a.assignment == b.assignment);
}
