#include <memory>

#include "dvq/geom/smooth.hpp"
#include "dvq/pipeline/generate.hpp"

namespace dvq::pipeline {

using geom::Vec3;
using net::DenseArray;
using net::Tape;
using net::Var;

GeneratedGrasp generate_grasp(const geom::TriMesh& object, net::ParamStore& store,
                              const PipelineConfig& cfg, const hand::HandModel& model,
                              const PriorConfig& prior_cfg, double temperature, net::Rng& rng,
                              double tau_m, bool with_volume) {
  GeneratedGrasp out;
  out.diagnostics.trained = store.step() > 0;

  const geom::SurfaceSample sample =
      geom::sample_surface(object, cfg.object_samples, [&rng]() { return rng.uniform(); });

  Tape tape;
  net::Rng enc_rng(net::Rng::derive(store.seed(), 90001));
  ObjectFeatures obj = encode_object(tape, store, cfg, sample.points, sample.normals, enc_rng,
                                     /*training=*/false);

  // object index is the nearest codebook entry (deterministic)
  vq::codebooks_register(store, cfg.codebook);
  const DenseArray& zt = tape.val(obj.z_t);
  const vq::NearestEntry obj_entry =
      vq::nearest_entry(store.value(vq::object_codebook_name()), zt.data.data(), zt.cols);
  out.diagnostics.object_index = obj_entry.index;

  const std::array<int, vq::kHandParts> tokens =
      prior_sample(store, prior_cfg, obj_entry.index, temperature, rng);
  out.diagnostics.hand_indices = tokens;

  std::vector<Var> quantized;
  for (int p = 0; p < vq::kHandParts; ++p) {
    auto idx = std::make_shared<const std::vector<int>>(std::vector<int>{tokens[p]});
    quantized.push_back(
        net::gather_rows(tape.param(store, vq::hand_codebook_name(p)), idx));
  }

  PostureDecode posture = decode_posture(tape, store, cfg, model, quantized, obj.z_t);
  PositionDecode position = decode_position(tape, store, cfg, posture.posture, obj.z_p);

  out.posture = hand::HandPosture::from_flat(tape.val(posture.posture).data);
  out.posture.clamp_rotations();
  out.position = hand::HandPosition::from_flat(tape.val(position.position).data);

  out.hand_mesh = model.forward(out.posture, out.position);

  const contact::ContactReport report =
      contact::contact_quantify(out.hand_mesh.mesh, object, tau_m);
  out.diagnostics.contact = report.any_contact();
  for (bool b : report.contact_map) out.diagnostics.contact_vertices += b ? 1 : 0;
  if (with_volume)
    out.diagnostics.penetration_volume_cm3 = contact::penetration_volume(out.hand_mesh.mesh,
                                                                         object);
  return out;
}

std::vector<Vec3> reconstruct_hand(net::ParamStore& store, const PipelineConfig& cfg,
                                   const hand::HandModel& model, const TrainSample& sample) {
  Tape tape;
  TrainConfig tcfg;
  net::Rng rng(net::Rng::derive(store.seed(), 90002));
  const SampleForward fwd =
      forward_sample(tape, store, cfg, tcfg, model, sample, rng, /*training=*/false);
  const DenseArray& pred = tape.val(fwd.reconstructed_vertices);
  std::vector<Vec3> out(pred.rows);
  for (size_t i = 0; i < pred.rows; ++i) out[i] = {pred(i, 0), pred(i, 1), pred(i, 2)};
  return out;
}

DeformPrediction predict_deformation(const geom::TriMesh& object, const geom::TriMesh& hand_mesh,
                                     net::ParamStore& store, const uformer::UFormerConfig& cfg,
                                     double tau_m) {
  const contact::ContactReport report = contact::contact_quantify(hand_mesh, object, tau_m);

  DenseArray features(object.vertex_count(), 5);
  for (int i = 0; i < object.vertex_count(); ++i) {
    features(i, 0) = report.depths[i];
    features(i, 1) = report.object_penetrated[i] ? 1.0 : 0.0;
    for (int c = 0; c < 3; ++c) features(i, 2 + c) = object.normals[i][c];
  }

  const geom::MeshHierarchy hier =
      geom::build_hierarchy(object, geom::default_voxel_schedule(object));

  Tape tape;
  net::Rng rng(net::Rng::derive(store.seed(), 90003));
  Var f = uformer::uformer_forward(tape, store, "deform", hier,
                                   net::leaf_const(tape, std::move(features)), cfg, rng,
                                   /*training=*/false);
  Var raw = uformer::deform_head_raw(tape, store, "deform", f, cfg);
  const uformer::DeformHead head = uformer::deform_apply(tape, object.vertices, raw);

  DeformPrediction out;
  const DenseArray& dv = tape.val(head.deformed);
  const DenseArray& disp = tape.val(head.displacement);
  out.deformed.vertices.resize(dv.rows);
  out.displacements.resize(dv.rows);
  for (size_t i = 0; i < dv.rows; ++i) {
    out.deformed.vertices[i] = {dv(i, 0), dv(i, 1), dv(i, 2)};
    out.displacements[i] = {disp(i, 0), disp(i, 1), disp(i, 2)};
  }
  out.deformed.faces = object.faces;
  geom::recompute_normals(out.deformed);
  out.smoothed = geom::taubin_smooth(out.deformed);
  return out;
}

}  // namespace dvq::pipeline
