#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dvq/contact/contact.hpp"
#include "dvq/geom/primitives.hpp"
#include "dvq/hand/model.hpp"
#include "dvq/net/gradcheck.hpp"
#include "dvq/uformer/uformer.hpp"
#include "dvq/vq/codebook.hpp"

namespace dvq::pipeline {

enum class Backbone { PointwiseMlp, MeshUFormer };

Backbone backbone_from_string(const std::string& s);
std::string to_string(Backbone b);

struct PipelineConfig {
  Backbone backbone = Backbone::PointwiseMlp;
  std::size_t feature_dim = 64;  // z_t, z_p and part feature width
  std::size_t enc_hidden = 128;
  vq::CodebookConfig codebook;
  std::size_t posture_hidden = 256;
  std::size_t zh_hidden = 64;
  std::size_t position_hidden = 128;
  int object_samples = 3000;  // N_o
  uformer::UFormerConfig uf;
  hand::HandModelConfig hand;
  double beta_commit = 0.25;
};

struct TrainConfig {
  double lambda_e = 10;
  double lambda_m = -50;
  double lambda_c = 1500;
  double lambda_p = 5;
  double lambda_h = 0.1;
  double lambda_v = 10;
  double lr = 1e-4;
  std::vector<int> lr_halve_epochs = {60, 120, 160, 180};
  int epochs = 200;
  int batch = 16;
  double prior_lr = 3e-4;
  int prior_epochs = 100;
  int prior_batch = 32;
  double tau_m = contact::kContactThreshold;
  std::uint64_t seed = 0;
};

// ---- dataset records (JSON-lines) ----

struct GraspRecord {
  std::string object_path;
  hand::HandPosture posture;
  hand::HandPosition position;
  std::vector<int> contact_indices;  // gt contact map, object vertex indices
  geom::Vec3 approach;               // unit approach direction used at synthesis
};

struct DeformRecord {
  std::string object_path;
  hand::HandPosture posture;
  hand::HandPosition position;
  std::vector<int> contact_indices;
  std::vector<geom::Vec3> displacements;  // per object vertex
  double amplitude = 0;                   // max displacement magnitude, meters
};

void write_grasp_records(const std::vector<GraspRecord>&, const std::filesystem::path&);
std::vector<GraspRecord> read_grasp_records(const std::filesystem::path&);
void write_deform_records(const std::vector<DeformRecord>&, const std::filesystem::path&);
std::vector<DeformRecord> read_deform_records(const std::filesystem::path&);

// ---- encoders ----

struct ObjectFeatures {
  net::Var z_t;  // type feature, translation-invariant (centered input)
  net::Var z_p;  // pose feature, sees absolute coordinates
};

ObjectFeatures encode_object(net::Tape& tape, net::ParamStore& store, const PipelineConfig& cfg,
                             const std::vector<geom::Vec3>& points,
                             const std::vector<geom::Vec3>& normals, net::Rng& rng,
                             bool training);

// One encoder per part over per-part centered vertices.
std::vector<net::Var> encode_hand_parts(net::Tape& tape, net::ParamStore& store,
                                        const PipelineConfig& cfg, const hand::HandModel& model,
                                        const std::vector<geom::Vec3>& hand_vertices);

// ---- dual-stage decoding ----

struct PostureDecode {
  net::Var posture;  // [1,55] after the gated skeletal correction
  net::Var theta;    // [1,15] provisional joint angles
};

PostureDecode decode_posture(net::Tape& tape, net::ParamStore& store, const PipelineConfig& cfg,
                             const hand::HandModel& model,
                             const std::vector<net::Var>& quantized_parts, net::Var z_t);

struct PositionDecode {
  net::Var position;  // [1,6]
  net::Var z_h;       // encoded posture (gradient-stopped before the decoder)
};

PositionDecode decode_position(net::Tape& tape, net::ParamStore& store,
                               const PipelineConfig& cfg, net::Var posture_hat, net::Var z_p);

// ---- losses ----

struct LossBreakdown {
  double total = 0;
  double l_posture = 0, l_position = 0, l_v = 0;
  double l_e = 0;
  double l_c = 0, l_m = 0, l_p = 0, l_contact = 0;
};

// L = lambda_h (L_posture + L_position) + lambda_v L_v + L_E + L_contact
double total_loss(const LossBreakdown& parts, const TrainConfig& cfg);

// Quantization state captured at one point: the selected indices plus the
// offsets e_k - z. Re-running the forward with this frozen turns the
// quantizer into the smooth local model the straight-through estimator
// differentiates, which is what makes the end-to-end finite-difference
// check well-posed.
struct FrozenQuantize {
  int object_index = -1;
  std::array<int, vq::kHandParts> hand_indices{};
  net::DenseArray object_offset;
  std::vector<net::DenseArray> hand_offsets;
};

struct SampleForward {
  net::Var loss;
  LossBreakdown values;
  net::Var reconstructed_vertices;  // [V,3]
  int object_index = -1;
  std::array<int, vq::kHandParts> hand_indices{};
  FrozenQuantize frozen_state;
};

struct TrainSample {
  geom::TriMesh object;
  std::vector<geom::Vec3> sample_points;
  std::vector<geom::Vec3> sample_normals;
  std::vector<bool> gt_contact_map;
  hand::HandPosture posture;
  hand::HandPosition position;
  std::vector<geom::Vec3> gt_vertices;  // posed gt hand
};

TrainSample prepare_sample(const GraspRecord& record, const std::filesystem::path& data_root,
                           const hand::HandModel& model, const PipelineConfig& cfg,
                           std::uint64_t seed);

SampleForward forward_sample(net::Tape& tape, net::ParamStore& store, const PipelineConfig& cfg,
                             const TrainConfig& tcfg, const hand::HandModel& model,
                             const TrainSample& sample, net::Rng& rng, bool training,
                             const FrozenQuantize* frozen = nullptr);

// ---- training ----

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0;
  LossBreakdown mean_parts;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  double holdout_vertex_error = 0;  // mean per-vertex distance, meters
};

TrainResult train_grasp_model(net::ParamStore& store, const std::vector<TrainSample>& train_set,
                              const std::vector<TrainSample>& holdout,
                              const PipelineConfig& cfg, const TrainConfig& tcfg);

double holdout_vertex_error(net::ParamStore& store, const std::vector<TrainSample>& samples,
                            const PipelineConfig& cfg, const TrainConfig& tcfg,
                            const hand::HandModel& model);

// mean per-vertex reconstruction error of one sample, eval mode
double reconstruction_error(net::ParamStore& store, const PipelineConfig& cfg,
                            const TrainConfig& tcfg, const hand::HandModel& model,
                            const TrainSample& sample);

// ---- deformation training ----

struct DeformSample {
  geom::TriMesh object;
  geom::TriMesh hand_mesh;
  geom::MeshHierarchy hierarchy;
  net::DenseArray features;  // per-vertex (depth, penetrated flag, normal)
  std::vector<geom::Vec3> gt_vertices;
  std::vector<geom::Vec3> gt_displacements;
  std::vector<bool> gt_contact_map;
  double amplitude = 0;
};

DeformSample prepare_deform_sample(const DeformRecord& record,
                                   const std::filesystem::path& data_root,
                                   const hand::HandModel& model, double tau_m);

struct DeformEpochLog {
  int epoch = 0;
  double mean_total = 0, mean_mse = 0, mean_sim = 0, mean_lap = 0, mean_normal = 0;
};

struct DeformTrainResult {
  std::vector<DeformEpochLog> epochs;
};

DeformTrainResult train_deform_model(net::ParamStore& store,
                                     const std::vector<DeformSample>& samples,
                                     const uformer::UFormerConfig& cfg, double lr, int epochs,
                                     int batch, std::uint64_t seed);

}  // namespace dvq::pipeline
