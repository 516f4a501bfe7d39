#pragma once

#include <string>
#include <vector>

#include "dvq/geom/hierarchy.hpp"
#include "dvq/net/mlp.hpp"
#include "dvq/net/store.hpp"
#include "dvq/net/tape.hpp"

namespace dvq::uformer {

struct UFormerConfig {
  int neighbors = 16;            // K
  std::size_t qkv_dim = 64;      // also the position-encoding width
  std::size_t hidden_dim = 256;  // attention output MLP hidden width
  std::size_t posenc_hidden = 64;
  int sublayers = 3;             // point-transformer layers per block
  double dropout = 0.0;
};

// MLP over (|p_ij|, theta_ij); theta is the angle between the neighbor
// offset and the center point's normal, pi/2 when the offset vanishes.
net::Var pos_encode(net::Tape& tape, net::ParamStore& store, const std::string& prefix,
                    net::Var dist_angle_pairs, const UFormerConfig& cfg);

// theta_ij table for a neighbor index matrix (row-major [n][k]).
std::vector<double> neighbor_angles(const std::vector<geom::Vec3>& points,
                                    const std::vector<geom::Vec3>& normals,
                                    const std::vector<std::vector<int>>& neighbor_idx);

// One point-transformer block: `sublayers` rounds of K-nearest attention
// with normal-guided position encodings, each followed by an output MLP.
net::Var point_transformer_block(net::Tape& tape, net::ParamStore& store,
                                 const std::string& prefix, net::Var features,
                                 const std::vector<geom::Vec3>& points,
                                 const std::vector<geom::Vec3>& normals,
                                 const UFormerConfig& cfg, net::Rng& rng, bool training);

// Symmetric encoder/decoder over the hierarchy: encoder blocks at every
// level with scatter-means in between, decoder blocks from the second-
// deepest level back up, each fed gather(coarse) + skip.
net::Var uformer_forward(net::Tape& tape, net::ParamStore& store, const std::string& prefix,
                         const geom::MeshHierarchy& hierarchy, net::Var input_features,
                         const UFormerConfig& cfg, net::Rng& rng, bool training);

// ---- deformation head ----

// meters per softplus unit; raw magnitude logits live in a well-conditioned
// O(1) range while displacements stay at millimeter scale
inline constexpr double kMagnitudeScale = 1e-3;

struct DeformHead {
  net::Var raw;           // [N,4]
  net::Var direction;     // unit rows (zero when the raw direction vanishes)
  net::Var magnitude;     // kMagnitudeScale * softplus(raw), [N,1]
  net::Var displacement;  // direction * magnitude
  net::Var deformed;      // original + displacement
};

// The magnitude-channel bias starts at -6 so a fresh head displaces by
// kMagnitudeScale * softplus(-6) ~ 2.5e-6 m, effectively the identity.
void deform_head_register(net::ParamStore& store, const std::string& prefix,
                          const UFormerConfig& cfg);

net::Var deform_head_raw(net::Tape& tape, net::ParamStore& store, const std::string& prefix,
                         net::Var features, const UFormerConfig& cfg);

DeformHead deform_apply(net::Tape& tape, const std::vector<geom::Vec3>& original_vertices,
                        net::Var raw_head_output);

struct DeformLoss {
  net::Var laplacian, normal, mse, similarity, total;
};

// L_lap + L_normal on the deformed mesh, displacement MSE against the
// ground truth, chamfer similarity; summed unweighted.
DeformLoss deform_loss(net::Tape& tape, net::Var deformed, net::Var displacement,
                       const std::vector<geom::Face>& faces,
                       const std::vector<geom::Vec3>& gt_vertices,
                       const std::vector<geom::Vec3>& gt_displacements);

// Tape counterparts of the plain mesh objectives.
net::Var laplacian_objective_tape(net::Tape& tape, net::Var vertices,
                                  const std::vector<geom::Face>& faces);
net::Var normal_consistency_tape(net::Tape& tape, net::Var vertices,
                                 const std::vector<geom::Face>& faces);
net::Var chamfer_tape(net::Tape& tape, net::Var a_vertices,
                      const std::vector<geom::Vec3>& b_points);

}  // namespace dvq::uformer
