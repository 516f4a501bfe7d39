#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "dvq/app/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"grasp generation and deformation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  dvq::app::RunConfig cfg;
  long long seed_flag = -1;
  int jobs_flag = -1;
  std::string out_flag, data_flag, ckpt_flag;

  app.add_option("--config", config_path, "key=value config file (supports include)");
  app.add_option("--seed", seed_flag, "run seed");
  app.add_option("--jobs", jobs_flag, "worker threads (default 1, reproducible)");
  app.add_option("--out", out_flag, "output directory");
  app.add_option("--data", data_flag, "dataset directory");
  app.add_option("--ckpt", ckpt_flag, "checkpoint directory");

  auto* synth = app.add_subcommand("synth", "generate objects, grasps and deformation records");
  synth->add_option("--objects", cfg.synth_objects, "object count");
  synth->add_option("--grasps-per-object", cfg.grasps_per_object, "grasps per object");

  auto* train = app.add_subcommand("train", "train the grasp model");
  train->add_option("--epochs", cfg.train.epochs, "training epochs");
  train->add_option("--lr", cfg.train.lr, "learning rate");
  train->add_option("--batch", cfg.train.batch, "batch size");

  auto* train_prior = app.add_subcommand("train-prior", "fit the autoregressive index prior");
  train_prior->add_option("--epochs", cfg.train.prior_epochs, "prior epochs");

  auto* train_deform = app.add_subcommand("train-deform", "train the deformation network");
  train_deform->add_option("--epochs", cfg.deform_epochs, "deformation epochs");
  train_deform->add_option("--lr", cfg.deform_lr, "deformation learning rate");

  auto* generate = app.add_subcommand("generate", "sample grasps for an object");
  generate->add_option("--object", cfg.object_path, "object mesh (obj/ply)")->required();
  generate->add_option("--count", cfg.generate_count, "grasps to sample");
  generate->add_option("--temperature", cfg.temperature, "prior sampling temperature");

  auto* deform = app.add_subcommand("deform", "simulate deformation under a hand mesh");
  deform->add_option("--object", cfg.object_path, "object mesh")->required();
  deform->add_option("--hand", cfg.hand_path, "hand mesh")->required();

  auto* eval = app.add_subcommand("eval", "compute evaluation metrics");
  eval->add_option("--quality-csv", cfg.quality_csv,
                   "csv of dataset,method,penetration,disp,quality rows");
  eval->add_option("--grasps", cfg.grasps_diag, "grasp diagnostics jsonl from generate");
  eval->add_option("--disp-csv", cfg.disp_csv, "per-grasp simulated displacement csv");

  app.add_subcommand("grad-check", "finite-difference checks over registered blocks");

  auto* mesh_info = app.add_subcommand("mesh-info", "print mesh statistics");
  mesh_info->add_option("--mesh", cfg.mesh_path, "mesh path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }

  try {
    dvq::app::KeyValues kv;
    if (!config_path.empty()) kv = dvq::app::parse_config_file(config_path);
    dvq::app::apply_env_overrides(kv);
    dvq::app::apply(kv, cfg);
    // explicit flags beat config and environment
    if (seed_flag >= 0) {
      cfg.seed = static_cast<std::uint64_t>(seed_flag);
      cfg.train.seed = cfg.seed;
    }
    if (jobs_flag > 0) cfg.jobs = jobs_flag;
    if (!out_flag.empty()) cfg.out_dir = out_flag;
    if (!data_flag.empty()) cfg.data_dir = data_flag;
    if (!ckpt_flag.empty()) cfg.ckpt_dir = ckpt_flag;
    cfg.prior.entries = cfg.pipeline.codebook.entries;

    return dvq::app::run(app.get_subcommands().front()->get_name(), cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
