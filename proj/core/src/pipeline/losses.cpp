#include "dvq/geom/mesh_io.hpp"
#include "dvq/pipeline/pipeline.hpp"

namespace dvq::pipeline {

using geom::Vec3;
using net::DenseArray;
using net::Tape;
using net::Var;

double total_loss(const LossBreakdown& parts, const TrainConfig& cfg) {
  const double l_r = cfg.lambda_h * (parts.l_posture + parts.l_position) +
                     cfg.lambda_v * parts.l_v;
  const double l_contact = cfg.lambda_m * parts.l_m + cfg.lambda_c * parts.l_c +
                           cfg.lambda_p * parts.l_p;
  return l_r + parts.l_e + l_contact;
}

TrainSample prepare_sample(const GraspRecord& record, const std::filesystem::path& data_root,
                           const hand::HandModel& model, const PipelineConfig& cfg,
                           std::uint64_t seed) {
  TrainSample s;
  s.object = geom::read_mesh(data_root / record.object_path);
  s.posture = record.posture;
  s.position = record.position;

  net::Rng rng(seed);
  const int want = std::min<int>(cfg.object_samples,
                                 std::max(3, cfg.object_samples));
  geom::SurfaceSample sample =
      geom::sample_surface(s.object, want, [&rng]() { return rng.uniform(); });
  s.sample_points = std::move(sample.points);
  s.sample_normals = std::move(sample.normals);

  s.gt_contact_map.assign(s.object.vertex_count(), false);
  for (int i : record.contact_indices)
    if (i >= 0 && i < s.object.vertex_count()) s.gt_contact_map[i] = true;

  s.gt_vertices = model.forward(record.posture, record.position).mesh.vertices;
  return s;
}

SampleForward forward_sample(Tape& tape, net::ParamStore& store, const PipelineConfig& cfg,
                             const TrainConfig& tcfg, const hand::HandModel& model,
                             const TrainSample& sample, net::Rng& rng, bool training,
                             const FrozenQuantize* frozen) {
  SampleForward out;

  ObjectFeatures obj =
      encode_object(tape, store, cfg, sample.sample_points, sample.sample_normals, rng, training);
  std::vector<Var> part_features =
      encode_hand_parts(tape, store, cfg, model, sample.gt_vertices);

  vq::QuantizeResult q;
  if (frozen) {
    vq::codebooks_register(store, cfg.codebook);
    q.object_index = frozen->object_index;
    q.hand_indices = frozen->hand_indices;
    auto oid = std::make_shared<const std::vector<int>>(std::vector<int>{frozen->object_index});
    q.object_entry = net::gather_rows(tape.param(store, vq::object_codebook_name()), oid);
    q.object_st = net::add(obj.z_t, net::leaf_const(tape, frozen->object_offset));
    for (int p = 0; p < vq::kHandParts; ++p) {
      auto hid =
          std::make_shared<const std::vector<int>>(std::vector<int>{frozen->hand_indices[p]});
      q.hand_entries.push_back(
          net::gather_rows(tape.param(store, vq::hand_codebook_name(p)), hid));
      q.hand_st.push_back(
          net::add(part_features[p], net::leaf_const(tape, frozen->hand_offsets[p])));
    }
  } else {
    q = vq::quantize(tape, store, obj.z_t, part_features, cfg.codebook);
  }
  out.object_index = q.object_index;
  out.hand_indices = q.hand_indices;

  // capture the local quantization state so callers can re-run the forward
  // as the smooth surrogate
  out.frozen_state.object_index = q.object_index;
  out.frozen_state.hand_indices = q.hand_indices;
  {
    const DenseArray& zt = tape.val(obj.z_t);
    const DenseArray& oe = tape.val(q.object_entry);
    out.frozen_state.object_offset = DenseArray(1, zt.cols);
    for (std::size_t i = 0; i < zt.cols; ++i)
      out.frozen_state.object_offset[i] = oe[i] - zt[i];
    for (int p = 0; p < vq::kHandParts; ++p) {
      const DenseArray& zp = tape.val(part_features[p]);
      const DenseArray& he = tape.val(q.hand_entries[p]);
      DenseArray off(1, zp.cols);
      for (std::size_t i = 0; i < zp.cols; ++i) off[i] = he[i] - zp[i];
      out.frozen_state.hand_offsets.push_back(std::move(off));
    }
  }

  Var l_e = vq::codebook_loss(obj.z_t, q.object_entry, part_features, q.hand_entries,
                              cfg.beta_commit, tcfg.lambda_e);

  PostureDecode posture = decode_posture(tape, store, cfg, model, q.hand_st, obj.z_t);
  PositionDecode position = decode_position(tape, store, cfg, posture.posture, obj.z_p);

  const std::vector<double> gt_posture = sample.posture.to_flat();
  const std::vector<double> gt_position = sample.position.to_flat();
  Var l_posture = net::l2norm(
      net::sub(posture.posture, net::leaf_const(tape, DenseArray::row(gt_posture))));
  Var l_position = net::l2norm(
      net::sub(position.position, net::leaf_const(tape, DenseArray::row(gt_position))));

  hand::HandModel::TapeHand pred = model.forward_tape(tape, posture.posture, position.position);
  out.reconstructed_vertices = pred.vertices;

  DenseArray gt_verts(sample.gt_vertices.size(), 3);
  for (size_t i = 0; i < sample.gt_vertices.size(); ++i)
    for (int c = 0; c < 3; ++c) gt_verts(i, c) = sample.gt_vertices[i][c];
  Var l_v = net::l2norm(net::sub(pred.vertices, net::leaf_const(tape, std::move(gt_verts))));

  // contact terms against the current predicted hand
  const DenseArray& pv = tape.val(pred.vertices);
  geom::TriMesh pred_mesh;
  pred_mesh.vertices.resize(pv.rows);
  for (size_t i = 0; i < pv.rows; ++i)
    pred_mesh.vertices[i] = {pv(i, 0), pv(i, 1), pv(i, 2)};
  pred_mesh.faces = model.faces();
  geom::recompute_normals(pred_mesh);
  const contact::ContactReport report =
      contact::contact_quantify(pred_mesh, sample.object, tcfg.tau_m, /*with_depths=*/false);

  std::vector<int> candidates;
  for (int i = 0; i < model.vertex_count(); ++i)
    if (model.contact_candidates()[i]) candidates.push_back(i);
  contact::ContactLambdas lambdas{tcfg.lambda_m, tcfg.lambda_c, tcfg.lambda_p};
  contact::ContactLossVars cls = contact::contact_losses_tape(
      tape, pred.vertices, report, sample.object, sample.gt_contact_map, candidates, lambdas);

  Var l_r = net::add(net::scale(net::add(l_posture, l_position), tcfg.lambda_h),
                     net::scale(l_v, tcfg.lambda_v));
  out.loss = net::add(net::add(l_r, l_e), cls.l_contact);

  out.values.l_posture = tape.val(l_posture).item();
  out.values.l_position = tape.val(l_position).item();
  out.values.l_v = tape.val(l_v).item();
  out.values.l_e = tape.val(l_e).item();
  out.values.l_c = tape.val(cls.l_c).item();
  out.values.l_m = tape.val(cls.l_m).item();
  out.values.l_p = tape.val(cls.l_p).item();
  out.values.l_contact = tape.val(cls.l_contact).item();
  out.values.total = tape.val(out.loss).item();
  return out;
}

}  // namespace dvq::pipeline
