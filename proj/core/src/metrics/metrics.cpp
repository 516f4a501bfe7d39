#include "dvq/metrics/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dvq/geom/kdtree.hpp"
#include "dvq/geom/raycast.hpp"
#include "dvq/net/rng.hpp"

namespace dvq::metrics {

namespace {
double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}
}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                    int max_iters) {
  if (static_cast<int>(points.size()) < k)
    throw std::runtime_error("kmeans: fewer samples than clusters");
  net::Rng rng(seed);
  KMeansResult r;
  r.centers.reserve(k);

  // k-means++ seeding
  r.centers.push_back(points[rng.uniform_int(static_cast<int>(points.size()))]);
  std::vector<double> best_d(points.size());
  while (static_cast<int>(r.centers.size()) < k) {
    double total = 0;
    for (size_t i = 0; i < points.size(); ++i) {
      double d = 1e300;
      for (const auto& c : r.centers) d = std::min(d, sq_dist(points[i], c));
      best_d[i] = d;
      total += d;
    }
    if (total <= 0) {
      // all remaining points coincide with a center; reuse the first point
      r.centers.push_back(points[0]);
      continue;
    }
    double pick = rng.uniform() * total;
    size_t chosen = points.size() - 1;
    for (size_t i = 0; i < points.size(); ++i) {
      pick -= best_d[i];
      if (pick <= 0) {
        chosen = i;
        break;
      }
    }
    r.centers.push_back(points[chosen]);
  }

  r.assignment.assign(points.size(), 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (size_t i = 0; i < points.size(); ++i) {
      int best = 0;
      double bd = 1e300;
      for (int c = 0; c < k; ++c) {
        const double d = sq_dist(points[i], r.centers[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (best != r.assignment[i]) {
        r.assignment[i] = best;
        changed = true;
      }
    }
    std::vector<std::vector<double>> sums(k, std::vector<double>(points[0].size(), 0.0));
    std::vector<int> counts(k, 0);
    for (size_t i = 0; i < points.size(); ++i) {
      counts[r.assignment[i]]++;
      for (size_t d = 0; d < points[i].size(); ++d) sums[r.assignment[i]][d] += points[i][d];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its center
      for (double& v : sums[c]) v /= counts[c];
      r.centers[c] = std::move(sums[c]);
    }
    if (!changed && iter > 0) break;
  }
  return r;
}

Diversity diversity(const std::vector<std::vector<double>>& features, int k,
                    std::uint64_t seed) {
  const KMeansResult km = kmeans(features, k, seed);
  std::vector<int> counts(k, 0);
  std::vector<double> radius_sq(k, 0.0);
  for (size_t i = 0; i < features.size(); ++i) {
    const int c = km.assignment[i];
    counts[c]++;
    radius_sq[c] += sq_dist(features[i], km.centers[c]);
  }
  Diversity out;
  const double n = static_cast<double>(features.size());
  int used = 0;
  for (int c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    const double p = counts[c] / n;
    out.entropy -= p * std::log(p);
    out.cluster_size += std::sqrt(radius_sq[c] / counts[c]);
    ++used;
  }
  if (used > 0) out.cluster_size /= used;
  return out;
}

double quality_index(double penetration_volume, double grasp_disp, double a) {
  return a * penetration_volume + (1.0 - a) * grasp_disp;
}

HodMetrics hod_metrics(const geom::TriMesh& deformed_object, const geom::TriMesh& hand,
                       const std::vector<bool>& gt_contact_map,
                       const geom::TriMesh& undeformed_object) {
  if (gt_contact_map.size() != deformed_object.vertices.size() ||
      deformed_object.vertices.size() != undeformed_object.vertices.size())
    throw std::runtime_error("hod_metrics: contact map / vertex count mismatch");

  HodMetrics out;
  double sum = 0;
  int contact_count = 0;
  std::vector<geom::Vec3> free_deformed, free_undeformed;
  for (size_t i = 0; i < gt_contact_map.size(); ++i) {
    if (gt_contact_map[i]) {
      sum += geom::point_mesh_distance(deformed_object.vertices[i], hand);
      ++contact_count;
    } else {
      free_deformed.push_back(deformed_object.vertices[i]);
      free_undeformed.push_back(undeformed_object.vertices[i]);
    }
  }
  if (contact_count > 0) out.hod_distance = sum / contact_count;
  if (!free_deformed.empty())
    out.masked_chamfer = geom::squared_chamfer_distance(free_deformed, free_undeformed);
  return out;
}

double contact_ratio(const std::vector<bool>& grasp_contacts) {
  if (grasp_contacts.empty()) throw std::runtime_error("contact_ratio: no grasps");
  int hits = 0;
  for (bool b : grasp_contacts) hits += b ? 1 : 0;
  return 100.0 * hits / static_cast<double>(grasp_contacts.size());
}

namespace {
void put_field(nlohmann::json& j, const char* name, const std::optional<double>& v) {
  if (v) j[name] = *v;
  else j[name] = nullptr;
}
std::string csv_field(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", *v);
  return buf;
}
}  // namespace

void write_report_json(const EvalReport& r, const std::filesystem::path& path) {
  nlohmann::json j;
  put_field(j, "contact_ratio_pct", r.contact_ratio_pct);
  put_field(j, "penetration_volume_cm3", r.penetration_volume_cm3);
  put_field(j, "entropy", r.entropy);
  put_field(j, "cluster_size", r.cluster_size);
  put_field(j, "quality_index", r.quality_index);
  put_field(j, "hod_distance", r.hod_distance);
  put_field(j, "masked_chamfer", r.masked_chamfer);
  put_field(j, "laplacian_objective", r.laplacian_objective);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  out << j.dump(2) << '\n';
}

void write_report_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  out << "contact_ratio_pct,penetration_volume_cm3,entropy,cluster_size,quality_index,"
         "hod_distance,masked_chamfer,laplacian_objective\n";
  out << csv_field(r.contact_ratio_pct) << ',' << csv_field(r.penetration_volume_cm3) << ','
      << csv_field(r.entropy) << ',' << csv_field(r.cluster_size) << ','
      << csv_field(r.quality_index) << ',' << csv_field(r.hod_distance) << ','
      << csv_field(r.masked_chamfer) << ',' << csv_field(r.laplacian_objective) << '\n';
}

std::vector<QualityRow> read_quality_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open quality csv: " + path.string());
  std::vector<QualityRow> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ls(line);
    QualityRow row;
    std::string field;
    std::getline(ls, row.dataset, ',');
    std::getline(ls, row.method, ',');
    std::getline(ls, field, ',');
    row.penetration = std::stod(field);
    std::getline(ls, field, ',');
    row.disp = std::stod(field);
    std::getline(ls, field, ',');
    row.printed_q = std::stod(field);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace dvq::metrics
