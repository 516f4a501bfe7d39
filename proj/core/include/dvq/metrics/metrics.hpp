#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "dvq/geom/trimesh.hpp"

namespace dvq::metrics {

struct Diversity {
  double entropy = 0;       // nats, over k-means cluster occupancy
  double cluster_size = 0;  // mean within-cluster RMS radius
};

struct KMeansResult {
  std::vector<int> assignment;
  std::vector<std::vector<double>> centers;
};

// k-means++ seeding, Lloyd iterations, deterministic under the seed.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                    int max_iters = 100);

// features: one row per grasp (55 posture values by default upstream).
Diversity diversity(const std::vector<std::vector<double>>& features, int k = 20,
                    std::uint64_t seed = 0);

// Q = a*x + (1-a)*y; x penetration volume (cm^3), y simulated displacement (cm).
double quality_index(double penetration_volume, double grasp_disp, double a = 0.301);

struct HodMetrics {
  std::optional<double> hod_distance;  // missing when the contact region is empty
  double masked_chamfer = 0;           // non-contact region vs the undeformed mesh
};

HodMetrics hod_metrics(const geom::TriMesh& deformed_object, const geom::TriMesh& hand,
                       const std::vector<bool>& gt_contact_map,
                       const geom::TriMesh& undeformed_object);

double contact_ratio(const std::vector<bool>& grasp_contacts);  // percent

struct EvalReport {
  std::optional<double> contact_ratio_pct;
  std::optional<double> penetration_volume_cm3;
  std::optional<double> entropy;
  std::optional<double> cluster_size;
  std::optional<double> quality_index;
  std::optional<double> hod_distance;
  std::optional<double> masked_chamfer;
  std::optional<double> laplacian_objective;
};

void write_report_json(const EvalReport& report, const std::filesystem::path& path);
// fixed column order matching the struct; missing values stay empty
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);

struct QualityRow {
  std::string dataset, method;
  double penetration = 0, disp = 0, printed_q = 0;
};

// rows of (x, y, Q) triples; header `dataset,method,penetration,disp,quality`
std::vector<QualityRow> read_quality_csv(const std::filesystem::path& path);

}  // namespace dvq::metrics
