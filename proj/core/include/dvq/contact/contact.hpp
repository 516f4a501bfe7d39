#pragma once

#include <filesystem>
#include <vector>

#include "dvq/geom/trimesh.hpp"
#include "dvq/net/tape.hpp"

namespace dvq::contact {

inline constexpr double kContactThreshold = 0.002;  // tau_m, meters

struct ContactReport {
  std::vector<bool> hand_contact;       // d_ji < 0 against the hand normal
  std::vector<bool> object_penetrated;  // d_ij < 0 against the object normal
  std::vector<double> depths;           // meters, 0 where not penetrated
  std::vector<bool> contact_map;        // object vertex within tau_m or penetrated

  bool any_contact() const;
};

// Two-sided quantification: hand vertices are tested against their nearest
// object vertex via the hand normal; object vertices against their nearest
// contact point via the object normal; penetration depth comes from a ray
// cast along the reverse object normal onto the hand surface (falling back
// to the nearest-contact-vertex distance on a miss).
// `with_depths = false` skips the ray casts (flags only); training uses it
// since the losses never read the depths.
ContactReport contact_quantify(const geom::TriMesh& hand, const geom::TriMesh& object,
                               double tau_m = kContactThreshold, bool with_depths = true);

// Overlap of the two solids on a voxel grid, reported in cm^3.
double penetration_volume(const geom::TriMesh& a, const geom::TriMesh& b, double voxel = 0.001);

struct ContactLambdas {
  double lambda_m = -50;
  double lambda_c = 1500;
  double lambda_p = 5;
};

struct ContactLossValues {
  double l_c = 0;  // gt-contact-region to candidate-hand distance sum
  double l_m = 0;  // contact-map agreement ratio in [0,1]
  double l_p = 0;  // squared penetration distances of hand points inside
  double l_contact = 0;
};

ContactLossValues contact_losses(const ContactReport& report, const geom::TriMesh& hand,
                                 const geom::TriMesh& object,
                                 const std::vector<bool>& gt_contact_map,
                                 const std::vector<int>& hand_candidates,
                                 const ContactLambdas& lambdas = {});

struct ContactLossVars {
  net::Var l_c, l_m, l_p, l_contact;
};

// Differentiable counterpart; nearest-point selections are frozen at the
// current hand vertex values and distances stay on the tape.
ContactLossVars contact_losses_tape(net::Tape& tape, net::Var hand_vertices,
                                    const ContactReport& report, const geom::TriMesh& object,
                                    const std::vector<bool>& gt_contact_map,
                                    const std::vector<int>& hand_candidates,
                                    const ContactLambdas& lambdas = {});

// One JSON object per line: object rows {kind, index, penetrated, depth,
// contact} then hand rows {kind, index, contact}.
void write_report_jsonl(const ContactReport& report, const std::filesystem::path& path);

}  // namespace dvq::contact
