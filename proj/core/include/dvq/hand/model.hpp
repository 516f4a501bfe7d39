#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "dvq/geom/trimesh.hpp"
#include "dvq/net/store.hpp"
#include "dvq/net/tape.hpp"

namespace dvq::hand {

inline constexpr int kShapeParams = 10;
inline constexpr int kFingerCount = 5;
inline constexpr int kJointsPerFinger = 3;           // knuckle, mid, distal
inline constexpr int kPoseParams = 45;               // 15 joints x axis-angle
inline constexpr int kPostureParams = kShapeParams + kPoseParams;
inline constexpr int kBoneCount = 1 + kFingerCount * kJointsPerFinger;
inline constexpr int kKeypointCount = 21;            // wrist + 4 per finger

enum Part { kThumb = 0, kIndex, kMiddle, kRing, kLittle, kPalm, kPartCount };

const char* part_name(int part);

// Unit axis about which positive curl closes the given finger toward the
// palm; the per-joint axis-angle is curl * axis.
geom::Vec3 finger_flexion_axis(int finger);

struct HandPosture {
  std::array<double, kShapeParams> alpha{};  // bone length/width coefficients
  std::array<double, kPoseParams> beta{};    // per-joint axis-angle, radians

  static HandPosture from_flat(const std::vector<double>& v);  // 55 values
  std::vector<double> to_flat() const;
  void clamp_rotations();  // |beta| components clamped to pi
};

struct HandPosition {
  geom::Vec3 gamma;  // translation, meters
  geom::Vec3 delta;  // global rotation, axis-angle

  static HandPosition from_flat(const std::vector<double>& v);  // 6 values
  std::vector<double> to_flat() const;
};

struct HandMesh {
  geom::TriMesh mesh;
  std::vector<int> part_labels;                      // one of Part per vertex
  std::array<geom::Vec3, kKeypointCount> keypoints;  // wrist, then 4 per finger
};

struct SkinWeight {
  int bone = 0;
  double weight = 0;
};

struct HandModelConfig {
  int finger_ring_segments = 10;  // vertices per finger cross-section
  int finger_rings = 11;
  int palm_subdiv = 6;
  // gated skeletal correction
  std::size_t gate_hidden = 64;
  std::size_t token_dim = 16;
};

// Procedural linear-blend-skinned hand with the same parameter interface as
// a 10+45+3+3 parametric hand. The rest template and joint positions are
// affine in alpha (precomputed basis deltas), so the whole parameter-to-mesh
// map is differentiable.
class HandModel {
 public:
  static HandModel build(const HandModelConfig& cfg = {});

  HandMesh forward(const HandPosture& posture, const HandPosition& position) const;
  std::array<geom::Vec3, kKeypointCount> keypoints(const HandPosture& posture,
                                                   const HandPosition& position) const;

  struct TapeHand {
    net::Var vertices;   // [V,3]
    net::Var keypoints;  // [21,3]
  };
  // posture [1,55], position [1,6]
  TapeHand forward_tape(net::Tape& tape, net::Var posture, net::Var position) const;
  net::Var keypoints_tape(net::Tape& tape, net::Var posture) const;

  int vertex_count() const { return static_cast<int>(rest_vertices_.size()); }
  const std::vector<geom::Face>& faces() const { return faces_; }
  const std::vector<int>& part_labels() const { return part_labels_; }
  const std::vector<bool>& contact_candidates() const { return contact_candidate_; }
  const std::vector<std::vector<SkinWeight>>& weights() const { return weights_; }
  const HandModelConfig& config() const { return config_; }

  // indices of vertices belonging to one part, fixed across poses
  const std::vector<int>& part_vertices(int part) const { return part_vertices_[part]; }

  geom::TriMesh rest_mesh() const;

  void save_assets(const std::filesystem::path& dir) const;
  // Verifies a saved asset pair matches this build (geometry + weights).
  bool matches_assets(const std::filesystem::path& dir) const;

  // --- internal layout, exposed for the tape builder and tests ---
  struct BoneLayout {
    int parent = -1;
    geom::Vec3 rest_origin;                      // at alpha = 0
    std::array<geom::Vec3, kShapeParams> basis;  // d origin / d alpha_k
  };
  const std::vector<BoneLayout>& bones() const { return bones_; }

 private:
  HandModelConfig config_;
  std::vector<geom::Vec3> rest_vertices_;  // alpha = 0
  std::vector<std::array<geom::Vec3, kShapeParams>> vertex_basis_;
  std::vector<geom::Face> faces_;
  std::vector<int> part_labels_;
  std::vector<std::vector<int>> part_vertices_;
  std::vector<bool> contact_candidate_;
  std::vector<std::vector<SkinWeight>> weights_;
  std::vector<BoneLayout> bones_;
  // finger tips at rest (alpha = 0) plus their alpha basis
  std::array<geom::Vec3, kFingerCount> rest_tips_;
  std::array<std::array<geom::Vec3, kShapeParams>, kFingerCount> tip_basis_;

  friend struct HandTapeBuilder;
};

// Interior-joint angles from the 21 keypoints; 3 per finger at the knuckle,
// mid and distal joints, in [0, pi]. Throws on coincident adjacent points.
std::array<double, 15> joint_angles(const std::array<geom::Vec3, kKeypointCount>& keypoints);

net::Var joint_angles_tape(net::Tape& tape, net::Var keypoints);  // [21,3] -> [1,15]

// posture_hat + G(theta) . T(posture_hat); G is an MLP->sigmoid gate and T a
// single-head self-attention over the 15 per-joint rotation tokens.
net::Var gated_correction(net::Tape& tape, net::ParamStore& store, const std::string& prefix,
                          net::Var posture_hat, net::Var theta, const HandModelConfig& cfg);

geom::TriMesh to_trimesh(const HandModel& model, const std::vector<geom::Vec3>& posed_vertices);

std::pair<std::vector<geom::Vec3>, geom::Vec3> center_vertices(const std::vector<geom::Vec3>& v);

}  // namespace dvq::hand
