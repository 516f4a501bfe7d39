#include "dvq/app/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dvq::app {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void parse_into(const std::filesystem::path& path, KeyValues& kv, int depth) {
  if (depth > 8) throw std::runtime_error("config: include nesting too deep");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.rfind("include ", 0) == 0) {
      const std::filesystem::path inc = trim(t.substr(8));
      parse_into(inc.is_absolute() ? inc : path.parent_path() / inc, kv, depth + 1);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      std::ostringstream os;
      os << path.string() << ":" << lineno << ": expected key=value";
      throw std::runtime_error(os.str());
    }
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw std::runtime_error("config: bad number for " + key + ": '" + v + "'");
  }
}

long to_long(const std::string& key, const std::string& v) {
  try {
    return std::stol(v);
  } catch (const std::exception&) {
    throw std::runtime_error("config: bad integer for " + key + ": '" + v + "'");
  }
}

}  // namespace

KeyValues parse_config_file(const std::filesystem::path& path) {
  KeyValues kv;
  parse_into(path, kv, 0);
  return kv;
}

void apply_env_overrides(KeyValues& kv) {
  static const char* keys[] = {
      "seed", "jobs", "data_dir", "ckpt_dir", "out_dir", "backbone", "feature_dim",
      "enc_hidden", "object_samples", "codebook.entries", "codebook.dim", "posture_hidden",
      "zh_hidden", "position_hidden", "beta_commit", "uf.neighbors", "uf.qkv_dim",
      "uf.hidden_dim", "uf.posenc_hidden", "uf.sublayers", "uf.dropout", "train.lambda_e",
      "train.lambda_m", "train.lambda_c", "train.lambda_p", "train.lambda_h", "train.lambda_v",
      "train.lr", "train.epochs", "train.batch", "train.tau_m", "prior.lr", "prior.epochs",
      "prior.batch", "prior.embed_dim", "prior.hidden", "synth.objects",
      "synth.grasps_per_object", "synth.press_depth", "deform.epochs", "deform.lr",
      "deform.batch", "generate.count", "generate.temperature"};
  for (const char* key : keys) {
    std::string env = "DVQ_";
    for (const char* p = key; *p; ++p)
      env += *p == '.' ? '_' : static_cast<char>(std::toupper(*p));
    if (const char* v = std::getenv(env.c_str())) kv[key] = v;
  }
}

void apply(const KeyValues& kv, RunConfig& cfg) {
  for (const auto& [key, v] : kv) {
    if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_long(key, v));
    else if (key == "jobs") cfg.jobs = static_cast<int>(to_long(key, v));
    else if (key == "data_dir") cfg.data_dir = v;
    else if (key == "ckpt_dir") cfg.ckpt_dir = v;
    else if (key == "out_dir") cfg.out_dir = v;
    else if (key == "backbone") cfg.pipeline.backbone = pipeline::backbone_from_string(v);
    else if (key == "feature_dim") cfg.pipeline.feature_dim = to_long(key, v);
    else if (key == "enc_hidden") cfg.pipeline.enc_hidden = to_long(key, v);
    else if (key == "object_samples") cfg.pipeline.object_samples = to_long(key, v);
    else if (key == "codebook.entries") cfg.pipeline.codebook.entries = to_long(key, v);
    else if (key == "codebook.dim") cfg.pipeline.codebook.dim = to_long(key, v);
    else if (key == "posture_hidden") cfg.pipeline.posture_hidden = to_long(key, v);
    else if (key == "zh_hidden") cfg.pipeline.zh_hidden = to_long(key, v);
    else if (key == "position_hidden") cfg.pipeline.position_hidden = to_long(key, v);
    else if (key == "beta_commit") cfg.pipeline.beta_commit = to_double(key, v);
    else if (key == "uf.neighbors") cfg.pipeline.uf.neighbors = to_long(key, v);
    else if (key == "uf.qkv_dim") cfg.pipeline.uf.qkv_dim = to_long(key, v);
    else if (key == "uf.hidden_dim") cfg.pipeline.uf.hidden_dim = to_long(key, v);
    else if (key == "uf.posenc_hidden") cfg.pipeline.uf.posenc_hidden = to_long(key, v);
    else if (key == "uf.sublayers") cfg.pipeline.uf.sublayers = to_long(key, v);
    else if (key == "uf.dropout") cfg.pipeline.uf.dropout = to_double(key, v);
    else if (key == "train.lambda_e") cfg.train.lambda_e = to_double(key, v);
    else if (key == "train.lambda_m") cfg.train.lambda_m = to_double(key, v);
    else if (key == "train.lambda_c") cfg.train.lambda_c = to_double(key, v);
    else if (key == "train.lambda_p") cfg.train.lambda_p = to_double(key, v);
    else if (key == "train.lambda_h") cfg.train.lambda_h = to_double(key, v);
    else if (key == "train.lambda_v") cfg.train.lambda_v = to_double(key, v);
    else if (key == "train.lr") cfg.train.lr = to_double(key, v);
    else if (key == "train.epochs") cfg.train.epochs = to_long(key, v);
    else if (key == "train.batch") cfg.train.batch = to_long(key, v);
    else if (key == "train.tau_m") cfg.train.tau_m = to_double(key, v);
    else if (key == "prior.lr") cfg.train.prior_lr = to_double(key, v);
    else if (key == "prior.epochs") cfg.train.prior_epochs = to_long(key, v);
    else if (key == "prior.batch") cfg.train.prior_batch = to_long(key, v);
    else if (key == "prior.embed_dim") cfg.prior.embed_dim = to_long(key, v);
    else if (key == "prior.hidden") cfg.prior.hidden = to_long(key, v);
    else if (key == "synth.objects") cfg.synth_objects = to_long(key, v);
    else if (key == "synth.grasps_per_object") cfg.grasps_per_object = to_long(key, v);
    else if (key == "synth.press_depth") cfg.press_depth = to_double(key, v);
    else if (key == "deform.epochs") cfg.deform_epochs = to_long(key, v);
    else if (key == "deform.lr") cfg.deform_lr = to_double(key, v);
    else if (key == "deform.batch") cfg.deform_batch = to_long(key, v);
    else if (key == "generate.count") cfg.generate_count = to_long(key, v);
    else if (key == "generate.temperature") cfg.temperature = to_double(key, v);
    else throw std::runtime_error("config: unknown key '" + key + "'");
  }
  // codebook entries must match the encoder output width unless pinned
  if (!kv.count("codebook.dim")) cfg.pipeline.codebook.dim = cfg.pipeline.feature_dim;
  cfg.prior.entries = cfg.pipeline.codebook.entries;
  cfg.train.seed = cfg.seed;
}

std::uint64_t config_hash(const KeyValues& kv) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const auto& [k, v] : kv) {
    mix(k);
    mix("=");
    mix(v);
    mix("\n");
  }
  return h;
}

KeyValues to_key_values(const RunConfig& cfg) {
  KeyValues kv;
  auto putd = [&kv](const std::string& k, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    kv[k] = buf;
  };
  auto puti = [&kv](const std::string& k, long long v) { kv[k] = std::to_string(v); };
  puti("seed", static_cast<long long>(cfg.seed));
  puti("jobs", cfg.jobs);
  kv["data_dir"] = cfg.data_dir.string();
  kv["ckpt_dir"] = cfg.ckpt_dir.string();
  kv["out_dir"] = cfg.out_dir.string();
  kv["backbone"] = pipeline::to_string(cfg.pipeline.backbone);
  puti("feature_dim", cfg.pipeline.feature_dim);
  puti("enc_hidden", cfg.pipeline.enc_hidden);
  puti("object_samples", cfg.pipeline.object_samples);
  puti("codebook.entries", cfg.pipeline.codebook.entries);
  puti("codebook.dim", cfg.pipeline.codebook.dim);
  puti("posture_hidden", cfg.pipeline.posture_hidden);
  puti("zh_hidden", cfg.pipeline.zh_hidden);
  puti("position_hidden", cfg.pipeline.position_hidden);
  putd("beta_commit", cfg.pipeline.beta_commit);
  puti("uf.neighbors", cfg.pipeline.uf.neighbors);
  puti("uf.qkv_dim", cfg.pipeline.uf.qkv_dim);
  puti("uf.hidden_dim", cfg.pipeline.uf.hidden_dim);
  puti("uf.posenc_hidden", cfg.pipeline.uf.posenc_hidden);
  puti("uf.sublayers", cfg.pipeline.uf.sublayers);
  putd("uf.dropout", cfg.pipeline.uf.dropout);
  putd("train.lambda_e", cfg.train.lambda_e);
  putd("train.lambda_m", cfg.train.lambda_m);
  putd("train.lambda_c", cfg.train.lambda_c);
  putd("train.lambda_p", cfg.train.lambda_p);
  putd("train.lambda_h", cfg.train.lambda_h);
  putd("train.lambda_v", cfg.train.lambda_v);
  putd("train.lr", cfg.train.lr);
  puti("train.epochs", cfg.train.epochs);
  puti("train.batch", cfg.train.batch);
  putd("train.tau_m", cfg.train.tau_m);
  putd("prior.lr", cfg.train.prior_lr);
  puti("prior.epochs", cfg.train.prior_epochs);
  puti("prior.batch", cfg.train.prior_batch);
  puti("prior.embed_dim", cfg.prior.embed_dim);
  puti("prior.hidden", cfg.prior.hidden);
  puti("synth.objects", cfg.synth_objects);
  puti("synth.grasps_per_object", cfg.grasps_per_object);
  putd("synth.press_depth", cfg.press_depth);
  puti("deform.epochs", cfg.deform_epochs);
  putd("deform.lr", cfg.deform_lr);
  puti("deform.batch", cfg.deform_batch);
  puti("generate.count", cfg.generate_count);
  putd("generate.temperature", cfg.temperature);
  return kv;
}

}  // namespace dvq::app
