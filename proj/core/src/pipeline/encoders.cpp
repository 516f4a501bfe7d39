#include <stdexcept>

#include "dvq/geom/hierarchy.hpp"
#include "dvq/pipeline/pipeline.hpp"

namespace dvq::pipeline {

using geom::Vec3;
using net::DenseArray;
using net::Tape;
using net::Var;

Backbone backbone_from_string(const std::string& s) {
  if (s == "pointwise-mlp") return Backbone::PointwiseMlp;
  if (s == "mesh-uformer") return Backbone::MeshUFormer;
  throw std::runtime_error("unknown backbone '" + s + "'");
}

std::string to_string(Backbone b) {
  return b == Backbone::PointwiseMlp ? "pointwise-mlp" : "mesh-uformer";
}

namespace {

DenseArray points_matrix(const std::vector<Vec3>& pts) {
  DenseArray m(pts.size(), 3);
  for (size_t i = 0; i < pts.size(); ++i)
    for (int c = 0; c < 3; ++c) m(i, c) = pts[i][c];
  return m;
}

DenseArray points_normals_matrix(const std::vector<Vec3>& pts, const std::vector<Vec3>& nrm) {
  DenseArray m(pts.size(), 6);
  for (size_t i = 0; i < pts.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      m(i, c) = pts[i][c];
      m(i, 3 + c) = nrm[i][c];
    }
  return m;
}

Var mean_rows(Tape& tape, Var rows) {
  const std::size_t n = tape.val(rows).rows;
  DenseArray ones(1, n, std::vector<double>(n, 1.0 / static_cast<double>(n)));
  return net::matmul(net::leaf_const(tape, std::move(ones)), rows);
}

Var pointwise_encoder(Tape& tape, net::ParamStore& store, const std::string& prefix,
                      Var per_point, const PipelineConfig& cfg) {
  net::MlpSpec spec{{tape.val(per_point).cols, cfg.enc_hidden, cfg.feature_dim}};
  return mean_rows(tape, net::mlp_forward(tape, store, prefix, per_point, spec));
}

Var uformer_encoder(Tape& tape, net::ParamStore& store, const std::string& prefix,
                    const std::vector<Vec3>& points, const std::vector<Vec3>& normals,
                    Var per_point, const PipelineConfig& cfg, net::Rng& rng, bool training) {
  geom::TriMesh probe;
  probe.vertices = points;
  const double o = geom::bbox_longest_edge(probe);
  const geom::MeshHierarchy hier =
      geom::build_hierarchy(points, normals, {0.0, o / 16.0, o / 8.0});
  Var f = uformer::uformer_forward(tape, store, prefix, hier, per_point, cfg.uf, rng, training);
  store.ensure(prefix + ".pool_w", cfg.uf.qkv_dim, cfg.feature_dim);
  store.ensure(prefix + ".pool_b", 1, cfg.feature_dim, net::Init::Zeros);
  return net::affine(tape, store, prefix + ".pool_w", prefix + ".pool_b", mean_rows(tape, f));
}

}  // namespace

ObjectFeatures encode_object(Tape& tape, net::ParamStore& store, const PipelineConfig& cfg,
                             const std::vector<Vec3>& points, const std::vector<Vec3>& normals,
                             net::Rng& rng, bool training) {
  if (points.size() < 3) throw std::runtime_error("encode_object: need at least 3 points");
  if (points.size() != normals.size())
    throw std::runtime_error("encode_object: point/normal count mismatch");

  // the type encoder sees centered coordinates, the pose encoder raw ones
  auto [centered, offset] = hand::center_vertices(points);
  (void)offset;

  ObjectFeatures out;
  if (cfg.backbone == Backbone::PointwiseMlp) {
    Var type_in = net::leaf_const(tape, points_normals_matrix(centered, normals));
    Var pose_in = net::leaf_const(tape, points_normals_matrix(points, normals));
    out.z_t = pointwise_encoder(tape, store, "enc.type", type_in, cfg);
    out.z_p = pointwise_encoder(tape, store, "enc.pose", pose_in, cfg);
  } else {
    Var type_in = net::leaf_const(tape, points_normals_matrix(centered, normals));
    Var pose_in = net::leaf_const(tape, points_normals_matrix(points, normals));
    out.z_t = uformer_encoder(tape, store, "enc.type.uf", centered, normals, type_in, cfg, rng,
                              training);
    out.z_p = uformer_encoder(tape, store, "enc.pose.uf", points, normals, pose_in, cfg, rng,
                              training);
  }
  return out;
}

std::vector<Var> encode_hand_parts(Tape& tape, net::ParamStore& store, const PipelineConfig& cfg,
                                   const hand::HandModel& model,
                                   const std::vector<Vec3>& hand_vertices) {
  if (hand_vertices.size() != static_cast<size_t>(model.vertex_count()))
    throw std::runtime_error("encode_hand_parts: vertex count does not match the hand model");
  std::vector<Var> features;
  features.reserve(vq::kHandParts);
  for (int part = 0; part < vq::kHandParts; ++part) {
    const std::vector<int>& idx = model.part_vertices(part);
    if (idx.empty())
      throw std::runtime_error(std::string("encode_hand_parts: empty part ") +
                               hand::part_name(part));
    std::vector<Vec3> verts;
    verts.reserve(idx.size());
    for (int i : idx) verts.push_back(hand_vertices[i]);
    auto [centered, offset] = hand::center_vertices(verts);
    (void)offset;
    Var in = net::leaf_const(tape, points_matrix(centered));
    net::MlpSpec spec{{3, cfg.enc_hidden, cfg.feature_dim}};
    Var per_point =
        net::mlp_forward(tape, store, "enc.part" + std::to_string(part), in, spec);
    features.push_back(mean_rows(tape, per_point));
  }
  return features;
}

}  // namespace dvq::pipeline
