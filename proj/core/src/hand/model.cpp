#include "dvq/hand/model.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "dvq/geom/primitives.hpp"
#include "dvq/net/mlp.hpp"

namespace dvq::hand {

using geom::Mat3;
using geom::Vec3;
using net::DenseArray;
using net::Tape;
using net::Var;

const char* part_name(int part) {
  static const char* names[] = {"thumb", "index", "middle", "ring", "little", "palm"};
  if (part < 0 || part >= kPartCount) throw std::runtime_error("bad part id");
  return names[part];
}

HandPosture HandPosture::from_flat(const std::vector<double>& v) {
  if (v.size() != kPostureParams) throw std::runtime_error("posture: expected 55 values");
  HandPosture p;
  std::copy(v.begin(), v.begin() + kShapeParams, p.alpha.begin());
  std::copy(v.begin() + kShapeParams, v.end(), p.beta.begin());
  return p;
}

std::vector<double> HandPosture::to_flat() const {
  std::vector<double> v(kPostureParams);
  std::copy(alpha.begin(), alpha.end(), v.begin());
  std::copy(beta.begin(), beta.end(), v.begin() + kShapeParams);
  return v;
}

void HandPosture::clamp_rotations() {
  for (double& b : beta) b = std::clamp(b, -M_PI, M_PI);
}

HandPosition HandPosition::from_flat(const std::vector<double>& v) {
  if (v.size() != 6) throw std::runtime_error("position: expected 6 values");
  return {{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
}

std::vector<double> HandPosition::to_flat() const {
  return {gamma.x, gamma.y, gamma.z, delta.x, delta.y, delta.z};
}

namespace {

struct FingerSpec {
  Vec3 mcp;
  Vec3 dir;
  double lengths[3];
  double radius;
};

// Rest geometry is slightly curled so no keypoint triple is collinear.
constexpr double kRestCurl = 0.12;
constexpr double kTipTaper = 0.55;

const FingerSpec kFingers[kFingerCount] = {
    {{-0.042, 0.020, -0.006}, {-0.55, 0.80, -0.25}, {0.035, 0.030, 0.025}, 0.0095},
    {{-0.030, 0.090, 0.000}, {-0.06, 1.00, -0.12}, {0.040, 0.025, 0.022}, 0.0080},
    {{-0.010, 0.092, 0.000}, {0.00, 1.00, -0.12}, {0.044, 0.028, 0.024}, 0.0080},
    {{0.010, 0.090, 0.000}, {0.04, 1.00, -0.12}, {0.041, 0.026, 0.023}, 0.0075},
    {{0.030, 0.086, 0.000}, {0.10, 1.00, -0.12}, {0.032, 0.020, 0.019}, 0.0065},
};

}  // namespace

Vec3 finger_flexion_axis(int finger) {
  // curling about this axis moves the finger toward the palmar (-z) side
  return normalized(cross(normalized(kFingers[finger].dir), Vec3{0, 0, -1}));
}

namespace {

struct RestGeometry {
  std::vector<Vec3> vertices;
  std::array<Vec3, kBoneCount> bone_origins;
  std::array<Vec3, kFingerCount> tips;
};

struct RestTopology {
  std::vector<geom::Face> faces;
  std::vector<int> labels;
  std::vector<std::vector<SkinWeight>> weights;
  std::vector<bool> contact;
};

// Evaluates the procedural generator at one shape-coefficient setting.
// Vertex ordering is identical for every alpha, which is what makes the
// finite-delta shape basis exact.
RestGeometry generate_rest(const HandModelConfig& cfg, const std::array<double, kShapeParams>& a,
                           RestTopology* topo) {
  RestGeometry out;
  const double global = 1.0 + 0.08 * a[0];
  const double finger_len = 1.0 + 0.10 * a[1];
  const double palm_w = 1.0 + 0.10 * a[2];
  const double palm_t = 1.0 + 0.15 * a[3];
  const double thumb_len = 1.0 + 0.12 * a[4];
  const double radius_s = 1.0 + 0.15 * a[5];
  const double palm_l = 1.0 + 0.10 * a[6];
  const double taper = kTipTaper + 0.08 * a[7];
  const double spread = 0.004 * a[8];
  const double knuckle_z = 0.004 * a[9];

  out.bone_origins[0] = {0, 0, 0};

  const int ring_n = cfg.finger_ring_segments;
  const int rings = cfg.finger_rings;
  for (int f = 0; f < kFingerCount; ++f) {
    const FingerSpec& spec = kFingers[f];
    const Vec3 axis = finger_flexion_axis(f);
    Vec3 mcp{spec.mcp.x * global * palm_w + spread * (spec.mcp.x / 0.03),
             spec.mcp.y * global * palm_l, spec.mcp.z * global + knuckle_z};
    const double len_scale = global * finger_len * (f == kThumb ? thumb_len : 1.0);
    const double r0 = spec.radius * global * radius_s;

    Vec3 dirs[kJointsPerFinger];
    const Vec3 base_dir = normalized(spec.dir);
    for (int s = 0; s < kJointsPerFinger; ++s)
      dirs[s] = geom::axis_angle_to_matrix(axis * (kRestCurl * (s + 1))) * base_dir;

    Vec3 joints[kJointsPerFinger + 1];
    joints[0] = mcp;
    for (int s = 0; s < kJointsPerFinger; ++s)
      joints[s + 1] = joints[s] + dirs[s] * (spec.lengths[s] * len_scale);
    for (int s = 0; s < kJointsPerFinger; ++s)
      out.bone_origins[1 + f * kJointsPerFinger + s] = joints[s];
    out.tips[f] = joints[kJointsPerFinger];

    // ring stations along the chain: (segment, fraction, blend spec)
    struct Station {
      int seg;
      double t;
    };
    const Station stations[11] = {{0, 0.0}, {0, 1. / 3}, {0, 2. / 3}, {0, 1.0}, {1, 1. / 3},
                                  {1, 2. / 3}, {1, 1.0}, {2, 0.25},  {2, 0.5}, {2, 0.75},
                                  {2, 1.0}};
    if (rings != 11)
      throw std::runtime_error("hand model: ring station table expects 11 rings");

    const int base_vertex = static_cast<int>(out.vertices.size());
    const int prox = 1 + f * kJointsPerFinger;
    for (int i = 0; i < rings; ++i) {
      const Station& st = stations[i];
      const Vec3 c = joints[st.seg] + dirs[st.seg] * (spec.lengths[st.seg] * len_scale * st.t);
      const Vec3 d = dirs[st.seg];
      const Vec3 ref = std::abs(dot(d, Vec3{0, 0, 1})) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
      const Vec3 e1 = normalized(cross(ref, d));
      const Vec3 e2 = cross(d, e1);
      const double r = r0 * (1.0 + (taper - 1.0) * i / (rings - 1));
      for (int k = 0; k < ring_n; ++k) {
        const double phi = 2.0 * M_PI * k / ring_n;
        const Vec3 off = e1 * (r * std::cos(phi)) + e2 * (r * std::sin(phi));
        out.vertices.push_back(c + off);
        if (topo) {
          topo->labels.push_back(f);
          const bool tip_zone = i >= 7;
          topo->contact.push_back(tip_zone || dot(normalized(off), Vec3{0, 0, -1}) > 0.2);
          std::vector<SkinWeight> w;
          if (i == 0) w = {{0, 0.4}, {prox, 0.6}};
          else if (i <= 2) w = {{prox, 1.0}};
          else if (i == 3) w = {{prox, 0.5}, {prox + 1, 0.5}};
          else if (i <= 5) w = {{prox + 1, 1.0}};
          else if (i == 6) w = {{prox + 1, 0.5}, {prox + 2, 0.5}};
          else w = {{prox + 2, 1.0}};
          topo->weights.push_back(std::move(w));
        }
      }
    }
    // caps
    out.vertices.push_back(joints[0] - dirs[0] * (r0 * 0.5));
    out.vertices.push_back(out.tips[f] + dirs[2] * (r0 * taper * 0.6));
    if (topo) {
      topo->labels.push_back(f);
      topo->contact.push_back(false);
      topo->weights.push_back({{0, 0.6}, {prox, 0.4}});
      topo->labels.push_back(f);
      topo->contact.push_back(true);
      topo->weights.push_back({{prox + 2, 1.0}});
      const int base_cap = base_vertex + rings * ring_n;
      const int tip_cap = base_cap + 1;
      for (int i = 0; i + 1 < rings; ++i) {
        for (int k = 0; k < ring_n; ++k) {
          const int kn = (k + 1) % ring_n;
          const int a0 = base_vertex + i * ring_n + k;
          const int a1 = base_vertex + i * ring_n + kn;
          const int b0 = base_vertex + (i + 1) * ring_n + k;
          const int b1 = base_vertex + (i + 1) * ring_n + kn;
          topo->faces.push_back({a0, a1, b0});
          topo->faces.push_back({a1, b1, b0});
        }
      }
      for (int k = 0; k < ring_n; ++k) {
        const int kn = (k + 1) % ring_n;
        topo->faces.push_back({base_cap, base_vertex + kn, base_vertex + k});
        const int last = base_vertex + (rings - 1) * ring_n;
        topo->faces.push_back({tip_cap, last + k, last + kn});
      }
    }
  }

  // palm block
  const Vec3 palm_half{0.041 * global * palm_w, 0.047 * global * palm_l,
                       0.013 * global * palm_t};
  const Vec3 palm_center{0, 0.045 * global * palm_l, 0};
  const geom::TriMesh palm = geom::make_box(palm_center, palm_half, cfg.palm_subdiv);
  const int palm_base = static_cast<int>(out.vertices.size());
  out.vertices.insert(out.vertices.end(), palm.vertices.begin(), palm.vertices.end());
  if (topo) {
    for (const Vec3& v : palm.vertices) {
      topo->labels.push_back(kPalm);
      topo->contact.push_back(v.z <= -palm_half.z + palm_center.z + 1e-12);
      topo->weights.push_back({{0, 1.0}});
    }
    for (const geom::Face& fc : palm.faces)
      topo->faces.push_back({fc[0] + palm_base, fc[1] + palm_base, fc[2] + palm_base});
  }
  return out;
}

}  // namespace

HandModel HandModel::build(const HandModelConfig& cfg) {
  HandModel m;
  m.config_ = cfg;

  RestTopology topo;
  const std::array<double, kShapeParams> zero{};
  RestGeometry base = generate_rest(cfg, zero, &topo);

  m.rest_vertices_ = base.vertices;
  m.faces_ = std::move(topo.faces);
  m.part_labels_ = std::move(topo.labels);
  m.weights_ = std::move(topo.weights);
  m.contact_candidate_.assign(topo.contact.begin(), topo.contact.end());

  m.bones_.resize(kBoneCount);
  m.bones_[0].parent = -1;
  m.bones_[0].rest_origin = base.bone_origins[0];
  for (int f = 0; f < kFingerCount; ++f) {
    for (int s = 0; s < kJointsPerFinger; ++s) {
      const int b = 1 + f * kJointsPerFinger + s;
      m.bones_[b].parent = s == 0 ? 0 : b - 1;
      m.bones_[b].rest_origin = base.bone_origins[b];
    }
    m.rest_tips_[f] = base.tips[f];
  }

  // shape basis as exact unit-coefficient deltas
  for (int k = 0; k < kShapeParams; ++k) {
    std::array<double, kShapeParams> unit{};
    unit[k] = 1.0;
    const RestGeometry g = generate_rest(cfg, unit, nullptr);
    m.vertex_basis_.resize(m.rest_vertices_.size());
    for (size_t i = 0; i < m.rest_vertices_.size(); ++i)
      m.vertex_basis_[i][k] = g.vertices[i] - m.rest_vertices_[i];
    for (int b = 0; b < kBoneCount; ++b)
      m.bones_[b].basis[k] = g.bone_origins[b] - m.bones_[b].rest_origin;
    for (int f = 0; f < kFingerCount; ++f)
      m.tip_basis_[f][k] = g.tips[f] - m.rest_tips_[f];
  }

  m.part_vertices_.resize(kPartCount);
  for (size_t i = 0; i < m.part_labels_.size(); ++i)
    m.part_vertices_[m.part_labels_[i]].push_back(static_cast<int>(i));
  for (int p = 0; p < kPartCount; ++p)
    if (m.part_vertices_[p].empty())
      throw std::runtime_error(std::string("hand model: part has no vertices: ") + part_name(p));
  return m;
}

namespace {

struct PosedBones {
  std::array<Mat3, kBoneCount> rot;
  std::array<Vec3, kBoneCount> pos;
};

PosedBones pose_bones(const HandModel& model, const std::array<Vec3, kBoneCount>& origins,
                      const std::array<double, kPoseParams>& beta) {
  PosedBones out;
  out.rot[0] = Mat3::identity();
  out.pos[0] = origins[0];
  const auto& bones = model.bones();
  for (int b = 1; b < kBoneCount; ++b) {
    const int parent = bones[b].parent;
    const int joint = b - 1;  // 15 articulated joints follow the root
    const Vec3 aa{beta[3 * joint], beta[3 * joint + 1], beta[3 * joint + 2]};
    out.rot[b] = out.rot[parent] * geom::axis_angle_to_matrix(aa);
    out.pos[b] = out.pos[parent] + out.rot[parent] * (origins[b] - origins[parent]);
  }
  return out;
}

}  // namespace

HandMesh HandModel::forward(const HandPosture& posture, const HandPosition& position) const {
  std::array<Vec3, kBoneCount> origins;
  for (int b = 0; b < kBoneCount; ++b) {
    origins[b] = bones_[b].rest_origin;
    for (int k = 0; k < kShapeParams; ++k) origins[b] += bones_[b].basis[k] * posture.alpha[k];
  }
  const PosedBones bones = pose_bones(*this, origins, posture.beta);
  const Mat3 rg = geom::axis_angle_to_matrix(position.delta);

  HandMesh out;
  out.mesh.vertices.resize(rest_vertices_.size());
  for (size_t i = 0; i < rest_vertices_.size(); ++i) {
    Vec3 rest = rest_vertices_[i];
    for (int k = 0; k < kShapeParams; ++k) rest += vertex_basis_[i][k] * posture.alpha[k];
    Vec3 posed{};
    for (const SkinWeight& w : weights_[i])
      posed += (bones.rot[w.bone] * (rest - origins[w.bone]) + bones.pos[w.bone]) * w.weight;
    out.mesh.vertices[i] = rg * posed + position.gamma;
  }
  out.mesh.faces = faces_;
  geom::recompute_normals(out.mesh);
  out.part_labels = part_labels_;

  out.keypoints[0] = rg * bones.pos[0] + position.gamma;
  for (int f = 0; f < kFingerCount; ++f) {
    for (int s = 0; s < kJointsPerFinger; ++s)
      out.keypoints[1 + 4 * f + s] = rg * bones.pos[1 + f * kJointsPerFinger + s] + position.gamma;
    Vec3 tip = rest_tips_[f];
    for (int k = 0; k < kShapeParams; ++k) tip += tip_basis_[f][k] * posture.alpha[k];
    const int distal = 1 + f * kJointsPerFinger + 2;
    const Vec3 posed_tip = bones.rot[distal] * (tip - origins[distal]) + bones.pos[distal];
    out.keypoints[1 + 4 * f + 3] = rg * posed_tip + position.gamma;
  }
  return out;
}

std::array<Vec3, kKeypointCount> HandModel::keypoints(const HandPosture& posture,
                                                      const HandPosition& position) const {
  std::array<Vec3, kBoneCount> origins;
  for (int b = 0; b < kBoneCount; ++b) {
    origins[b] = bones_[b].rest_origin;
    for (int k = 0; k < kShapeParams; ++k) origins[b] += bones_[b].basis[k] * posture.alpha[k];
  }
  const PosedBones bones = pose_bones(*this, origins, posture.beta);
  const Mat3 rg = geom::axis_angle_to_matrix(position.delta);
  std::array<Vec3, kKeypointCount> kp;
  kp[0] = rg * bones.pos[0] + position.gamma;
  for (int f = 0; f < kFingerCount; ++f) {
    for (int s = 0; s < kJointsPerFinger; ++s)
      kp[1 + 4 * f + s] = rg * bones.pos[1 + f * kJointsPerFinger + s] + position.gamma;
    Vec3 tip = rest_tips_[f];
    for (int k = 0; k < kShapeParams; ++k) tip += tip_basis_[f][k] * posture.alpha[k];
    const int distal = 1 + f * kJointsPerFinger + 2;
    kp[1 + 4 * f + 3] = rg * (bones.rot[distal] * (tip - origins[distal]) + bones.pos[distal]) +
                        position.gamma;
  }
  return kp;
}

geom::TriMesh HandModel::rest_mesh() const {
  HandMesh h = forward({}, {});
  return h.mesh;
}

geom::TriMesh to_trimesh(const HandModel& model, const std::vector<Vec3>& posed_vertices) {
  geom::TriMesh mesh;
  mesh.vertices = posed_vertices;
  mesh.faces = model.faces();
  geom::recompute_normals(mesh);
  return mesh;
}

std::pair<std::vector<Vec3>, Vec3> center_vertices(const std::vector<Vec3>& v) {
  const Vec3 c = geom::centroid(v);
  std::vector<Vec3> out = v;
  for (Vec3& p : out) p -= c;
  return {out, c};
}

std::array<double, 15> joint_angles(const std::array<Vec3, kKeypointCount>& kp) {
  std::array<double, 15> out{};
  int idx = 0;
  for (int f = 0; f < kFingerCount; ++f) {
    const int base = 1 + 4 * f;
    const int chain[5] = {0, base, base + 1, base + 2, base + 3};
    for (int j = 1; j <= 3; ++j) {
      const Vec3 u = kp[chain[j - 1]] - kp[chain[j]];
      const Vec3 v = kp[chain[j + 1]] - kp[chain[j]];
      const double nu = norm(u), nv = norm(v);
      if (nu < 1e-12 || nv < 1e-12)
        throw std::runtime_error("joint_angles: coincident adjacent keypoints at joint " +
                                 std::to_string(idx));
      out[idx++] = std::acos(std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0));
    }
  }
  return out;
}

// --------------------------------------------------------------- tape side

namespace {

Var rodrigues_tape(Tape& tape, Var aa_row) {
  static const DenseArray skew = [] {
    DenseArray s(3, 9);
    s(0, 5) = -1; s(0, 7) = 1;   // wx -> W12, W21
    s(1, 2) = 1;  s(1, 6) = -1;  // wy -> W02, W20
    s(2, 1) = -1; s(2, 3) = 1;   // wz -> W01, W10
    return s;
  }();
  static const DenseArray eye = [] {
    DenseArray i(3, 3);
    i(0, 0) = i(1, 1) = i(2, 2) = 1;
    return i;
  }();
  Var s2 = net::sum_sq(aa_row);
  Var f = net::sincsq(s2);
  Var g = net::coscsq(s2);
  Var w = net::reshape(net::matmul(aa_row, net::leaf_const(tape, skew)), 3, 3);
  Var w2 = net::matmul(w, w);
  return net::add(net::leaf_const(tape, eye),
                  net::add(net::scale_by(w, f), net::scale_by(w2, g)));
}

// rows * R^T, the row-vector form of applying rotation R
Var rot_apply(Var rows, Var rot) { return net::matmul(rows, net::transpose(rot)); }

}  // namespace

struct HandTapeBuilder {
  static HandModel::TapeHand run(const HandModel& m, Tape& tape, Var posture, Var position) {
    const DenseArray& pv = tape.val(posture);
    if (pv.rows != 1 || pv.cols != kPostureParams)
      throw std::runtime_error("hand forward: posture must be [1,55]");
    bool with_position = position.valid();
    if (with_position) {
      const DenseArray& qv = tape.val(position);
      if (qv.rows != 1 || qv.cols != 6)
        throw std::runtime_error("hand forward: position must be [1,6]");
    }

    Var alpha = net::slice_cols(posture, 0, kShapeParams);
    Var beta = net::slice_cols(posture, kShapeParams, kPostureParams);

    // rest geometry, affine in alpha
    const size_t nv = m.rest_vertices_.size();
    DenseArray v0(nv, 3);
    DenseArray vb(kShapeParams, nv * 3);
    for (size_t i = 0; i < nv; ++i)
      for (int c = 0; c < 3; ++c) {
        v0(i, c) = m.rest_vertices_[i][c];
        for (int k = 0; k < kShapeParams; ++k)
          vb(k, i * 3 + c) = m.vertex_basis_[i][k][c];
      }
    Var rest = net::add(net::leaf_const(tape, std::move(v0)),
                        net::reshape(net::matmul(alpha, net::leaf_const(tape, std::move(vb))),
                                     nv, 3));

    DenseArray o0(kBoneCount, 3);
    DenseArray ob(kShapeParams, kBoneCount * 3);
    for (int b = 0; b < kBoneCount; ++b)
      for (int c = 0; c < 3; ++c) {
        o0(b, c) = m.bones_[b].rest_origin[c];
        for (int k = 0; k < kShapeParams; ++k) ob(k, b * 3 + c) = m.bones_[b].basis[k][c];
      }
    Var origins = net::add(net::leaf_const(tape, std::move(o0)),
                           net::reshape(net::matmul(alpha, net::leaf_const(tape, std::move(ob))),
                                        kBoneCount, 3));

    DenseArray t0(kFingerCount, 3);
    DenseArray tb(kShapeParams, kFingerCount * 3);
    for (int f = 0; f < kFingerCount; ++f)
      for (int c = 0; c < 3; ++c) {
        t0(f, c) = m.rest_tips_[f][c];
        for (int k = 0; k < kShapeParams; ++k) tb(k, f * 3 + c) = m.tip_basis_[f][k][c];
      }
    Var tips = net::add(net::leaf_const(tape, std::move(t0)),
                        net::reshape(net::matmul(alpha, net::leaf_const(tape, std::move(tb))),
                                     kFingerCount, 3));

    // forward kinematics
    std::vector<Var> bone_rot(kBoneCount), bone_pos(kBoneCount), bone_origin(kBoneCount);
    DenseArray eye(3, 3);
    eye(0, 0) = eye(1, 1) = eye(2, 2) = 1;
    bone_rot[0] = net::leaf_const(tape, eye);
    bone_origin[0] = net::slice_rows(origins, 0, 1);
    bone_pos[0] = bone_origin[0];
    for (int b = 1; b < kBoneCount; ++b) {
      const int parent = m.bones_[b].parent;
      const int joint = b - 1;
      Var aa = net::slice_cols(beta, 3 * joint, 3 * joint + 3);
      bone_origin[b] = net::slice_rows(origins, b, b + 1);
      bone_rot[b] = net::matmul(bone_rot[parent], rodrigues_tape(tape, aa));
      Var offset = net::sub(bone_origin[b], bone_origin[parent]);
      bone_pos[b] = net::add(bone_pos[parent], rot_apply(offset, bone_rot[parent]));
    }

    // linear blend skinning, accumulated per bone
    Var skinned;
    bool first = true;
    for (int b = 0; b < kBoneCount; ++b) {
      std::vector<int> idx;
      std::vector<double> w;
      for (size_t i = 0; i < m.weights_.size(); ++i)
        for (const SkinWeight& sw : m.weights_[i])
          if (sw.bone == b) {
            idx.push_back(static_cast<int>(i));
            w.push_back(sw.weight);
          }
      if (idx.empty()) continue;
      auto idx_ptr = std::make_shared<const std::vector<int>>(std::move(idx));
      Var local = net::add_rowvec(net::gather_rows(rest, idx_ptr), net::neg(bone_origin[b]));
      Var posed = net::add_rowvec(rot_apply(local, bone_rot[b]), bone_pos[b]);
      Var weighted = net::mul_colvec(
          posed, net::leaf_const(tape, DenseArray(idx_ptr->size(), 1, std::move(w))));
      Var scattered = net::scatter_add_rows(weighted, idx_ptr, nv);
      skinned = first ? scattered : net::add(skinned, scattered);
      first = false;
    }

    // keypoints: wrist, then knuckle/mid/distal joints and the posed tip
    std::vector<Var> kp_rows;
    kp_rows.push_back(bone_pos[0]);
    for (int f = 0; f < kFingerCount; ++f) {
      const int prox = 1 + f * kJointsPerFinger;
      for (int s = 0; s < kJointsPerFinger; ++s) kp_rows.push_back(bone_pos[prox + s]);
      Var tip_rest = net::slice_rows(tips, f, f + 1);
      Var local = net::sub(tip_rest, bone_origin[prox + 2]);
      kp_rows.push_back(net::add(bone_pos[prox + 2], rot_apply(local, bone_rot[prox + 2])));
    }
    Var keypoints = net::concat_rows(kp_rows);

    if (with_position) {
      Var gamma = net::slice_cols(position, 0, 3);
      Var delta = net::slice_cols(position, 3, 6);
      Var rg = rodrigues_tape(tape, delta);
      skinned = net::add_rowvec(rot_apply(skinned, rg), gamma);
      keypoints = net::add_rowvec(rot_apply(keypoints, rg), gamma);
    }
    return {skinned, keypoints};
  }
};

HandModel::TapeHand HandModel::forward_tape(Tape& tape, Var posture, Var position) const {
  return HandTapeBuilder::run(*this, tape, posture, position);
}

Var HandModel::keypoints_tape(Tape& tape, Var posture) const {
  return HandTapeBuilder::run(*this, tape, posture, {}).keypoints;
}

Var joint_angles_tape(Tape& tape, Var keypoints) {
  std::vector<int> prev, center, next;
  for (int f = 0; f < kFingerCount; ++f) {
    const int base = 1 + 4 * f;
    const int chain[5] = {0, base, base + 1, base + 2, base + 3};
    for (int j = 1; j <= 3; ++j) {
      prev.push_back(chain[j - 1]);
      center.push_back(chain[j]);
      next.push_back(chain[j + 1]);
    }
  }
  auto pi = std::make_shared<const std::vector<int>>(std::move(prev));
  auto ci = std::make_shared<const std::vector<int>>(std::move(center));
  auto ni = std::make_shared<const std::vector<int>>(std::move(next));
  Var c = net::gather_rows(keypoints, ci);
  Var u = net::sub(net::gather_rows(keypoints, pi), c);
  Var v = net::sub(net::gather_rows(keypoints, ni), c);
  Var cosang = net::divide(net::rows_dot(u, v), net::mul(net::rows_norm(u), net::rows_norm(v)));
  return net::transpose(net::acosv(cosang));
}

Var gated_correction(Tape& tape, net::ParamStore& store, const std::string& prefix,
                     Var posture_hat, Var theta, const HandModelConfig& cfg) {
  const std::size_t dt = cfg.token_dim;
  // gate in (0,1)^55 from the joint angles
  net::MlpSpec gate_spec{{15, cfg.gate_hidden, kPostureParams}};
  gate_spec.output = net::Activation::Sigmoid;
  Var gate = net::mlp_forward(tape, store, prefix + ".gate", theta, gate_spec);

  // correction: tokens are the 15 per-joint rotation triples
  Var rot = net::slice_cols(posture_hat, kShapeParams, kPostureParams);
  Var tokens = net::reshape(rot, 15, 3);
  store.ensure(prefix + ".tok_w", 3, dt);
  store.ensure(prefix + ".tok_b", 1, dt, net::Init::Zeros);
  Var emb = net::affine(tape, store, prefix + ".tok_w", prefix + ".tok_b", tokens);
  store.ensure(prefix + ".wq", dt, dt);
  store.ensure(prefix + ".wk", dt, dt);
  store.ensure(prefix + ".wv", dt, dt);
  Var q = net::matmul(emb, tape.param(store, prefix + ".wq"));
  Var k = net::matmul(emb, tape.param(store, prefix + ".wk"));
  Var v = net::matmul(emb, tape.param(store, prefix + ".wv"));
  Var scores = net::scale(net::matmul(q, net::transpose(k)), 1.0 / std::sqrt(double(dt)));
  Var attn = net::rows_softmax(scores);
  Var mixed = net::matmul(attn, v);  // [15, dt]
  store.ensure(prefix + ".out_w", 15 * dt, kPostureParams);
  store.ensure(prefix + ".out_b", 1, kPostureParams, net::Init::Zeros);
  Var correction = net::affine(tape, store, prefix + ".out_w", prefix + ".out_b",
                               net::reshape(mixed, 1, 15 * dt));
  return net::add(posture_hat, net::mul(gate, correction));
}

}  // namespace dvq::hand
