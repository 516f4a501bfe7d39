#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "dvq/pipeline/pipeline.hpp"
#include "dvq/pipeline/prior.hpp"

namespace dvq::app {

struct RunConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path ckpt_dir = "ckpt";
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  int jobs = 1;

  pipeline::PipelineConfig pipeline;
  pipeline::TrainConfig train;
  pipeline::PriorConfig prior;

  int synth_objects = 200;
  int grasps_per_object = 5;
  double press_depth = 0.006;  // extra approach used for deformation records

  int deform_epochs = 120;
  double deform_lr = 1e-3;
  int deform_batch = 4;

  int generate_count = 10;
  double temperature = 1.0;

  // per-invocation inputs
  std::string object_path;
  std::string hand_path;
  std::string mesh_path;
  std::string quality_csv;
  std::string grasps_diag;
  std::string disp_csv;
};

using KeyValues = std::map<std::string, std::string>;

// Flat `key = value` file; `#` comments; `include <path>` pulls in defaults
// relative to the including file (later keys win).
KeyValues parse_config_file(const std::filesystem::path& path);

// Environment overrides: DVQ_<KEY> with dots replaced by underscores,
// upper-cased (DVQ_TRAIN_LR overrides train.lr).
void apply_env_overrides(KeyValues& kv);

void apply(const KeyValues& kv, RunConfig& cfg);

// FNV-1a over the canonical key=value listing; logged with every run.
std::uint64_t config_hash(const KeyValues& kv);
KeyValues to_key_values(const RunConfig& cfg);

}  // namespace dvq::app
