#pragma once

#include <optional>

#include "dvq/pipeline/pipeline.hpp"
#include "dvq/pipeline/prior.hpp"

namespace dvq::pipeline {

struct GraspDiagnostics {
  bool trained = true;
  int object_index = -1;
  std::array<int, vq::kHandParts> hand_indices{};
  bool contact = false;
  int contact_vertices = 0;
  double penetration_volume_cm3 = 0;
};

struct GeneratedGrasp {
  hand::HandMesh hand_mesh;
  hand::HandPosture posture;
  hand::HandPosition position;
  GraspDiagnostics diagnostics;
};

// Inference path: encode the object, look up the object codebook index,
// sample hand-part indices from the prior, decode posture then position,
// then run the hand layer and quantify the result.
GeneratedGrasp generate_grasp(const geom::TriMesh& object, net::ParamStore& store,
                              const PipelineConfig& cfg, const hand::HandModel& model,
                              const PriorConfig& prior_cfg, double temperature, net::Rng& rng,
                              double tau_m = contact::kContactThreshold,
                              bool with_volume = true);

// Training-style reconstruction (encodes the ground-truth hand); used for
// the held-out vertex-error evaluation.
std::vector<geom::Vec3> reconstruct_hand(net::ParamStore& store, const PipelineConfig& cfg,
                                         const hand::HandModel& model,
                                         const TrainSample& sample);

// Deformation inference: features from contact quantification, Mesh UFormer
// forward, head, displacement; smoothing is left to the caller.
struct DeformPrediction {
  geom::TriMesh deformed;
  geom::TriMesh smoothed;
  std::vector<geom::Vec3> displacements;
};

DeformPrediction predict_deformation(const geom::TriMesh& object, const geom::TriMesh& hand_mesh,
                                     net::ParamStore& store, const uformer::UFormerConfig& cfg,
                                     double tau_m = contact::kContactThreshold);

}  // namespace dvq::pipeline
