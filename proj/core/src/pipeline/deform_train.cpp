#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dvq/geom/mesh_io.hpp"
#include "dvq/pipeline/pipeline.hpp"

namespace dvq::pipeline {

using geom::Vec3;
using net::DenseArray;
using net::Tape;
using net::Var;

DeformSample prepare_deform_sample(const DeformRecord& record,
                                   const std::filesystem::path& data_root,
                                   const hand::HandModel& model, double tau_m) {
  DeformSample s;
  s.object = geom::read_mesh(data_root / record.object_path);
  if (record.displacements.size() != s.object.vertices.size())
    throw std::runtime_error("deform sample: displacement count != object vertex count");
  s.hand_mesh = model.forward(record.posture, record.position).mesh;
  s.amplitude = record.amplitude;

  const contact::ContactReport report =
      contact::contact_quantify(s.hand_mesh, s.object, tau_m);
  // depths are capped at 5 cm: beyond that the sign test is flagging the
  // far side of the object, not a dent
  s.features = DenseArray(s.object.vertex_count(), 5);
  for (int i = 0; i < s.object.vertex_count(); ++i) {
    s.features(i, 0) = std::min(report.depths[i], 0.05);
    s.features(i, 1) = report.object_penetrated[i] ? 1.0 : 0.0;
    for (int c = 0; c < 3; ++c) s.features(i, 2 + c) = s.object.normals[i][c];
  }

  s.hierarchy = geom::build_hierarchy(s.object, geom::default_voxel_schedule(s.object));
  s.gt_displacements = record.displacements;
  s.gt_vertices.resize(s.object.vertices.size());
  for (size_t i = 0; i < s.object.vertices.size(); ++i)
    s.gt_vertices[i] = s.object.vertices[i] + record.displacements[i];
  s.gt_contact_map.assign(s.object.vertex_count(), false);
  for (int i : record.contact_indices)
    if (i >= 0 && i < s.object.vertex_count()) s.gt_contact_map[i] = true;
  return s;
}

DeformTrainResult train_deform_model(net::ParamStore& store,
                                     const std::vector<DeformSample>& samples,
                                     const uformer::UFormerConfig& cfg, double lr, int epochs,
                                     int batch, std::uint64_t seed) {
  if (samples.empty()) throw std::runtime_error("train_deform: empty sample set");
  DeformTrainResult result;

  net::Rng shuffle_rng(net::Rng::derive(seed, 977));
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);
    DeformEpochLog log;
    log.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      Tape tape;
      net::Rng rng(net::Rng::derive(seed, (epoch + 1) * 999983ull + begin));
      Var loss;
      bool first = true;
      for (std::size_t k = begin; k < end; ++k) {
        const DeformSample& s = samples[order[k]];
        Var f = uformer::uformer_forward(tape, store, "deform", s.hierarchy,
                                         net::leaf_const(tape, s.features), cfg, rng, true);
        Var raw = uformer::deform_head_raw(tape, store, "deform", f, cfg);
        const uformer::DeformHead head = uformer::deform_apply(tape, s.object.vertices, raw);
        const uformer::DeformLoss dl = uformer::deform_loss(
            tape, head.deformed, head.displacement, s.object.faces, s.gt_vertices,
            s.gt_displacements);
        log.mean_total += tape.val(dl.total).item();
        log.mean_mse += tape.val(dl.mse).item();
        log.mean_sim += tape.val(dl.similarity).item();
        log.mean_lap += tape.val(dl.laplacian).item();
        log.mean_normal += tape.val(dl.normal).item();
        loss = first ? dl.total : net::add(loss, dl.total);
        first = false;
      }
      Var scaled = net::scale(loss, 1.0 / static_cast<double>(end - begin));
      if (!std::isfinite(tape.val(scaled).item()))
        throw std::runtime_error("train_deform: non-finite loss at epoch " +
                                 std::to_string(epoch));
      tape.backward(scaled);
      store.adam_step(lr);
      ++batches;
    }
    const double n = static_cast<double>(samples.size());
    log.mean_total /= n;
    log.mean_mse /= n;
    log.mean_sim /= n;
    log.mean_lap /= n;
    log.mean_normal /= n;
    (void)batches;
    result.epochs.push_back(log);
  }
  return result;
}

}  // namespace dvq::pipeline
