#include "dvq/app/run.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include <json.hpp>

#include "dvq/app/synth.hpp"
#include "dvq/geom/inside.hpp"
#include "dvq/geom/mesh_io.hpp"
#include "dvq/geom/smooth.hpp"
#include "dvq/metrics/metrics.hpp"
#include "dvq/pipeline/generate.hpp"

namespace dvq::app {

using nlohmann::json;

namespace {

void log_run_header(const std::string& command, const RunConfig& cfg) {
  std::printf("[%s] seed=%llu config_hash=%016llx\n", command.c_str(),
              static_cast<unsigned long long>(cfg.seed),
              static_cast<unsigned long long>(config_hash(to_key_values(cfg))));
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int cmd_synth(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.data_dir);
  const hand::HandModel model = hand::HandModel::build(cfg.pipeline.hand);
  model.save_assets(cfg.data_dir / "hand");

  const std::vector<std::string> objects =
      synth_objects(cfg.data_dir / "objects", cfg.seed, cfg.synth_objects, cfg.jobs);
  std::printf("[synth] %zu objects\n", objects.size());

  GraspSynthStats stats;
  const std::vector<pipeline::GraspRecord> grasps =
      synth_grasps(cfg.data_dir, objects, model, cfg.seed, cfg.grasps_per_object,
                   cfg.train.tau_m, &stats, cfg.jobs);
  pipeline::write_grasp_records(grasps, cfg.data_dir / "grasps.jsonl");
  std::printf("[synth] %d/%d grasps emitted (%d skipped)\n", stats.emitted, stats.requested,
              stats.skipped);

  const std::vector<pipeline::DeformRecord> deform = synth_deformations(
      cfg.data_dir, grasps, model, cfg.seed, cfg.press_depth, cfg.train.tau_m, cfg.jobs);
  pipeline::write_deform_records(deform, cfg.data_dir / "deform.jsonl");
  std::printf("[synth] %zu deformation records\n", deform.size());
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const std::vector<pipeline::GraspRecord> records =
      pipeline::read_grasp_records(cfg.data_dir / "grasps.jsonl");
  if (records.empty()) throw std::runtime_error("train: no grasp records");
  const hand::HandModel model = hand::HandModel::build(cfg.pipeline.hand);

  std::vector<pipeline::TrainSample> samples(records.size());
  parallel_for(static_cast<int>(records.size()), cfg.jobs, [&](int i) {
    samples[i] = pipeline::prepare_sample(records[i], cfg.data_dir, model, cfg.pipeline,
                                          net::Rng::derive(cfg.seed, 3000000 + i));
  });

  // deterministic 90/10 split by index
  std::vector<pipeline::TrainSample> train_set, holdout;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (i % 10 == 9) holdout.push_back(std::move(samples[i]));
    else train_set.push_back(std::move(samples[i]));
  }

  net::ParamStore store(cfg.seed);
  const pipeline::TrainResult result =
      pipeline::train_grasp_model(store, train_set, holdout, cfg.pipeline, cfg.train);

  std::filesystem::create_directories(cfg.ckpt_dir);
  store.save(cfg.ckpt_dir / "model.ckpt");

  std::ofstream log(cfg.ckpt_dir / "losses.jsonl");
  for (const pipeline::EpochLog& e : result.epochs) {
    json j;
    j["epoch"] = e.epoch;
    j["loss"] = fmt17(e.mean_loss);
    j["posture"] = e.mean_parts.l_posture;
    j["position"] = e.mean_parts.l_position;
    j["v"] = e.mean_parts.l_v;
    j["e"] = e.mean_parts.l_e;
    j["contact"] = e.mean_parts.l_contact;
    log << j.dump() << '\n';
  }
  std::printf("[train] %zu samples, %d epochs, first=%.4f last=%.4f holdout_vertex_err=%.6f m\n",
              train_set.size(), cfg.train.epochs,
              result.epochs.empty() ? 0.0 : result.epochs.front().mean_loss,
              result.epochs.empty() ? 0.0 : result.epochs.back().mean_loss,
              result.holdout_vertex_error);
  return 0;
}

int cmd_train_prior(const RunConfig& cfg) {
  net::ParamStore store = net::ParamStore::load(cfg.ckpt_dir / "model.ckpt");
  const std::vector<pipeline::GraspRecord> records =
      pipeline::read_grasp_records(cfg.data_dir / "grasps.jsonl");
  const hand::HandModel model = hand::HandModel::build(cfg.pipeline.hand);

  // re-encode the corpus to codebook indices
  std::vector<pipeline::IndexSequence> corpus(records.size());
  parallel_for(static_cast<int>(records.size()), cfg.jobs, [&](int i) {
    const pipeline::TrainSample sample = pipeline::prepare_sample(
        records[i], cfg.data_dir, model, cfg.pipeline, net::Rng::derive(cfg.seed, 3000000 + i));
    net::Tape tape;
    net::Rng rng(net::Rng::derive(cfg.seed, 4000000 + i));
    pipeline::ObjectFeatures obj = pipeline::encode_object(
        tape, store, cfg.pipeline, sample.sample_points, sample.sample_normals, rng, false);
    std::vector<net::Var> parts =
        pipeline::encode_hand_parts(tape, store, cfg.pipeline, model, sample.gt_vertices);
    const vq::QuantizeResult q =
        vq::quantize(tape, store, obj.z_t, parts, cfg.pipeline.codebook);
    corpus[i].object = q.object_index;
    corpus[i].tokens = q.hand_indices;
  });

  net::ParamStore prior_store(net::Rng::derive(cfg.seed, 5));
  const pipeline::PriorFitResult fit =
      pipeline::prior_fit(prior_store, corpus, cfg.prior, cfg.train.prior_lr,
                          cfg.train.prior_epochs, cfg.train.prior_batch, cfg.seed);
  prior_store.save(cfg.ckpt_dir / "prior.ckpt");
  std::printf("[train-prior] corpus=%zu nll first=%.4f last=%.4f\n", corpus.size(),
              fit.epoch_nll.front(), fit.epoch_nll.back());
  return 0;
}

int cmd_train_deform(const RunConfig& cfg) {
  const std::vector<pipeline::DeformRecord> records =
      pipeline::read_deform_records(cfg.data_dir / "deform.jsonl");
  if (records.empty()) throw std::runtime_error("train-deform: no deformation records");
  const hand::HandModel model = hand::HandModel::build(cfg.pipeline.hand);

  std::vector<pipeline::DeformSample> samples(records.size());
  parallel_for(static_cast<int>(records.size()), cfg.jobs, [&](int i) {
    samples[i] =
        pipeline::prepare_deform_sample(records[i], cfg.data_dir, model, cfg.train.tau_m);
  });

  net::ParamStore store(net::Rng::derive(cfg.seed, 11));
  const pipeline::DeformTrainResult result = pipeline::train_deform_model(
      store, samples, cfg.pipeline.uf, cfg.deform_lr, cfg.deform_epochs, cfg.deform_batch,
      cfg.seed);
  std::filesystem::create_directories(cfg.ckpt_dir);
  store.save(cfg.ckpt_dir / "deform.ckpt");

  std::ofstream log(cfg.ckpt_dir / "deform_losses.jsonl");
  for (const pipeline::DeformEpochLog& e : result.epochs) {
    json j;
    j["epoch"] = e.epoch;
    j["loss"] = fmt17(e.mean_total);
    j["mse"] = e.mean_mse;
    j["sim"] = e.mean_sim;
    j["lap"] = e.mean_lap;
    j["normal"] = e.mean_normal;
    log << j.dump() << '\n';
  }
  std::printf("[train-deform] %zu samples, %d epochs, first=%.6g last=%.6g\n", samples.size(),
              cfg.deform_epochs, result.epochs.front().mean_total,
              result.epochs.back().mean_total);
  return 0;
}

int cmd_generate(const RunConfig& cfg) {
  net::ParamStore store = net::ParamStore::load(cfg.ckpt_dir / "model.ckpt");
  net::ParamStore prior_store = net::ParamStore::load(cfg.ckpt_dir / "prior.ckpt");
  const hand::HandModel model = hand::HandModel::build(cfg.pipeline.hand);
  if (cfg.object_path.empty()) throw std::runtime_error("generate: --object is required");
  const geom::TriMesh object = geom::read_mesh(cfg.object_path);

  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream diag(cfg.out_dir / "diagnostics.jsonl");
  for (int i = 0; i < cfg.generate_count; ++i) {
    net::Rng rng(net::Rng::derive(cfg.seed, 6000000 + i));
    // the prior lives in its own store; generate reads the pipeline store
    // for encoders/codebooks/decoders and the prior store for sampling
    pipeline::PipelineConfig pcfg = cfg.pipeline;
    pipeline::GeneratedGrasp grasp;
    {
      // sample codebook indices with the prior store, decode with the model store
      const geom::SurfaceSample sample = geom::sample_surface(
          object, pcfg.object_samples, [&rng]() { return rng.uniform(); });
      net::Tape tape;
      net::Rng enc_rng(net::Rng::derive(cfg.seed, 90001));
      pipeline::ObjectFeatures obj = pipeline::encode_object(
          tape, store, pcfg, sample.points, sample.normals, enc_rng, false);
      vq::codebooks_register(store, pcfg.codebook);
      const net::DenseArray& zt = tape.val(obj.z_t);
      const vq::NearestEntry oe = vq::nearest_entry(
          store.value(vq::object_codebook_name()), zt.data.data(), zt.cols);
      const auto tokens =
          pipeline::prior_sample(prior_store, cfg.prior, oe.index, cfg.temperature, rng);
      std::vector<net::Var> quantized;
      for (int p = 0; p < vq::kHandParts; ++p) {
        auto idx = std::make_shared<const std::vector<int>>(std::vector<int>{tokens[p]});
        quantized.push_back(net::gather_rows(tape.param(store, vq::hand_codebook_name(p)), idx));
      }
      pipeline::PostureDecode posture =
          pipeline::decode_posture(tape, store, pcfg, model, quantized, obj.z_t);
      pipeline::PositionDecode position =
          pipeline::decode_position(tape, store, pcfg, posture.posture, obj.z_p);
      grasp.posture = hand::HandPosture::from_flat(tape.val(posture.posture).data);
      grasp.posture.clamp_rotations();
      grasp.position = hand::HandPosition::from_flat(tape.val(position.position).data);
      grasp.hand_mesh = model.forward(grasp.posture, grasp.position);
      grasp.diagnostics.trained = store.step() > 0;
      grasp.diagnostics.object_index = oe.index;
      grasp.diagnostics.hand_indices = tokens;
      const contact::ContactReport report =
          contact::contact_quantify(grasp.hand_mesh.mesh, object, cfg.train.tau_m);
      grasp.diagnostics.contact = report.any_contact();
      for (bool b : report.contact_map) grasp.diagnostics.contact_vertices += b ? 1 : 0;
      grasp.diagnostics.penetration_volume_cm3 =
          contact::penetration_volume(grasp.hand_mesh.mesh, object);
    }

    char name[32];
    std::snprintf(name, sizeof(name), "grasp_%03d.obj", i);
    geom::write_mesh(grasp.hand_mesh.mesh, cfg.out_dir / name, geom::MeshFormat::Obj);

    json j;
    j["index"] = i;
    j["object"] = cfg.object_path;
    j["trained"] = grasp.diagnostics.trained;
    j["object_index"] = grasp.diagnostics.object_index;
    j["hand_indices"] = grasp.diagnostics.hand_indices;
    j["posture"] = grasp.posture.to_flat();
    j["position"] = grasp.position.to_flat();
    j["contact"] = grasp.diagnostics.contact;
    j["contact_vertices"] = grasp.diagnostics.contact_vertices;
    j["penetration_volume_cm3"] = grasp.diagnostics.penetration_volume_cm3;
    diag << j.dump() << '\n';
  }
  std::printf("[generate] wrote %d grasps to %s\n", cfg.generate_count,
              cfg.out_dir.string().c_str());
  return 0;
}

int cmd_deform(const RunConfig& cfg) {
  net::ParamStore store = net::ParamStore::load(cfg.ckpt_dir / "deform.ckpt");
  if (cfg.object_path.empty() || cfg.hand_path.empty())
    throw std::runtime_error("deform: --object and --hand are required");
  const geom::TriMesh object = geom::read_mesh(cfg.object_path);
  const geom::TriMesh hand_mesh = geom::read_mesh(cfg.hand_path);

  const pipeline::DeformPrediction pred = pipeline::predict_deformation(
      object, hand_mesh, store, cfg.pipeline.uf, cfg.train.tau_m);

  std::filesystem::create_directories(cfg.out_dir);
  geom::write_mesh(pred.deformed, cfg.out_dir / "deformed.obj", geom::MeshFormat::Obj);
  geom::write_mesh(pred.smoothed, cfg.out_dir / "deformed_smooth.obj", geom::MeshFormat::Obj);

  const geom::MeshObjectives before = geom::mesh_objectives(pred.deformed);
  const geom::MeshObjectives after = geom::mesh_objectives(pred.smoothed);
  json j;
  j["object"] = cfg.object_path;
  j["hand"] = cfg.hand_path;
  j["laplacian_before_smooth"] = before.laplacian;
  j["laplacian_after_smooth"] = after.laplacian;
  j["normal_consistency"] = after.normal_consistency;
  double max_disp = 0;
  for (const geom::Vec3& d : pred.displacements) max_disp = std::max(max_disp, norm(d));
  j["max_displacement"] = max_disp;
  std::ofstream out(cfg.out_dir / "deform_diagnostics.json");
  out << j.dump(2) << '\n';
  std::printf("[deform] max displacement %.6f m, laplacian %.6g -> %.6g\n", max_disp,
              before.laplacian, after.laplacian);
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  metrics::EvalReport report;

  if (!cfg.quality_csv.empty()) {
    const std::vector<metrics::QualityRow> rows = metrics::read_quality_csv(cfg.quality_csv);
    double max_err = 0;
    std::printf("dataset,method,penetration,disp,quality\n");
    for (const metrics::QualityRow& r : rows) {
      const double q = metrics::quality_index(r.penetration, r.disp);
      max_err = std::max(max_err, std::abs(q - r.printed_q));
      std::printf("%s,%s,%.2f,%.2f,%.4f\n", r.dataset.c_str(), r.method.c_str(), r.penetration,
                  r.disp, q);
    }
    std::printf("[eval] %zu rows, max |Q - printed| = %.4f\n", rows.size(), max_err);
    if (!rows.empty()) report.quality_index = metrics::quality_index(rows[0].penetration,
                                                                     rows[0].disp);
  }

  if (!cfg.grasps_diag.empty()) {
    std::ifstream in(cfg.grasps_diag);
    if (!in) throw std::runtime_error("eval: cannot open " + cfg.grasps_diag);
    std::vector<bool> contacts;
    std::vector<double> volumes;
    std::vector<std::vector<double>> postures;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      contacts.push_back(j.at("contact").get<bool>());
      volumes.push_back(j.at("penetration_volume_cm3").get<double>());
      postures.push_back(j.at("posture").get<std::vector<double>>());
    }
    if (contacts.empty()) throw std::runtime_error("eval: no grasp diagnostics");
    report.contact_ratio_pct = metrics::contact_ratio(contacts);
    double mean_vol = 0;
    for (double v : volumes) mean_vol += v;
    report.penetration_volume_cm3 = mean_vol / volumes.size();
    if (static_cast<int>(postures.size()) >= 20) {
      const metrics::Diversity div = metrics::diversity(postures, 20, cfg.seed);
      report.entropy = div.entropy;
      report.cluster_size = div.cluster_size;
    }
    if (!cfg.disp_csv.empty()) {
      std::ifstream disp_in(cfg.disp_csv);
      if (!disp_in) throw std::runtime_error("eval: cannot open " + cfg.disp_csv);
      std::string dline;
      std::getline(disp_in, dline);  // header
      double qsum = 0;
      int qcount = 0;
      while (std::getline(disp_in, dline)) {
        if (dline.empty()) continue;
        const auto comma = dline.find(',');
        const int idx = std::stoi(dline.substr(0, comma));
        const double disp = std::stod(dline.substr(comma + 1));
        if (idx >= 0 && idx < static_cast<int>(volumes.size())) {
          qsum += metrics::quality_index(volumes[idx], disp);
          ++qcount;
        }
      }
      if (qcount > 0) report.quality_index = qsum / qcount;
    }
  }

  metrics::write_report_json(report, cfg.out_dir / "eval_report.json");
  metrics::write_report_csv(report, cfg.out_dir / "eval_report.csv");
  std::printf("[eval] report written to %s\n", (cfg.out_dir / "eval_report.json").c_str());
  return 0;
}

int cmd_mesh_info(const RunConfig& cfg) {
  if (cfg.mesh_path.empty()) throw std::runtime_error("mesh-info: --mesh is required");
  const geom::TriMesh mesh = geom::read_mesh(cfg.mesh_path);
  const geom::Aabb box = geom::bounding_box(mesh.vertices);
  std::printf("vertices: %d\nfaces: %d\n", mesh.vertex_count(), mesh.face_count());
  std::printf("bbox min: %.6g %.6g %.6g\n", box.min.x, box.min.y, box.min.z);
  std::printf("bbox max: %.6g %.6g %.6g\n", box.max.x, box.max.y, box.max.z);
  if (!mesh.faces.empty()) {
    const geom::MeshObjectives obj = geom::mesh_objectives(mesh);
    std::printf("laplacian objective: %.9g\nnormal consistency: %.9g\n", obj.laplacian,
                obj.normal_consistency);
    net::Rng rng(cfg.seed);
    int consistent = 0;
    const geom::Vec3 ext = box.extent();
    for (int p = 0; p < 100; ++p) {
      const geom::Vec3 probe{box.min.x + ext.x * rng.uniform(), box.min.y + ext.y * rng.uniform(),
                             box.min.z + ext.z * rng.uniform()};
      consistent += geom::parity_consistent(mesh, probe) ? 1 : 0;
    }
    std::printf("parity-consistent probes: %d/100\n", consistent);
  }
  return 0;
}

}  // namespace

int run(const std::string& command, const RunConfig& cfg) {
  log_run_header(command, cfg);
  if (command == "synth") return cmd_synth(cfg);
  if (command == "train") return cmd_train(cfg);
  if (command == "train-prior") return cmd_train_prior(cfg);
  if (command == "train-deform") return cmd_train_deform(cfg);
  if (command == "generate") return cmd_generate(cfg);
  if (command == "deform") return cmd_deform(cfg);
  if (command == "eval") return cmd_eval(cfg);
  if (command == "mesh-info") return cmd_mesh_info(cfg);
  if (command == "grad-check") {
    const std::vector<GradCheckEntry> entries = run_grad_checks(true);
    bool all = true;
    for (const GradCheckEntry& e : entries) all = all && e.passed;
    return all ? 0 : 1;
  }
  throw std::runtime_error("unknown command '" + command + "'");
}

}  // namespace dvq::app
