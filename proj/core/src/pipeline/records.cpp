#include <fstream>

#include <json.hpp>

#include "dvq/pipeline/pipeline.hpp"

namespace dvq::pipeline {

using nlohmann::json;

namespace {

json vec3_to_json(const geom::Vec3& v) { return json::array({v.x, v.y, v.z}); }
geom::Vec3 vec3_from_json(const json& j) { return {j.at(0), j.at(1), j.at(2)}; }

json params_to_json(const hand::HandPosture& posture, const hand::HandPosition& position) {
  json j;
  j["alpha"] = posture.alpha;
  j["beta"] = posture.beta;
  j["gamma"] = vec3_to_json(position.gamma);
  j["delta"] = vec3_to_json(position.delta);
  return j;
}

void params_from_json(const json& j, hand::HandPosture& posture, hand::HandPosition& position) {
  const auto& a = j.at("alpha");
  const auto& b = j.at("beta");
  for (size_t i = 0; i < posture.alpha.size(); ++i) posture.alpha[i] = a.at(i);
  for (size_t i = 0; i < posture.beta.size(); ++i) posture.beta[i] = b.at(i);
  position.gamma = vec3_from_json(j.at("gamma"));
  position.delta = vec3_from_json(j.at("delta"));
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

}  // namespace

void write_grasp_records(const std::vector<GraspRecord>& records,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path.string());
  for (const GraspRecord& r : records) {
    json j = params_to_json(r.posture, r.position);
    j["object"] = r.object_path;
    j["contact"] = r.contact_indices;
    j["approach"] = vec3_to_json(r.approach);
    out << j.dump() << '\n';
  }
}

std::vector<GraspRecord> read_grasp_records(const std::filesystem::path& path) {
  std::vector<GraspRecord> out;
  for (const std::string& line : read_lines(path)) {
    const json j = json::parse(line);
    GraspRecord r;
    r.object_path = j.at("object");
    params_from_json(j, r.posture, r.position);
    r.contact_indices = j.at("contact").get<std::vector<int>>();
    if (j.contains("approach")) r.approach = vec3_from_json(j.at("approach"));
    out.push_back(std::move(r));
  }
  return out;
}

void write_deform_records(const std::vector<DeformRecord>& records,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path.string());
  for (const DeformRecord& r : records) {
    json j = params_to_json(r.posture, r.position);
    j["object"] = r.object_path;
    j["contact"] = r.contact_indices;
    j["amplitude"] = r.amplitude;
    json disp = json::array();
    for (const geom::Vec3& d : r.displacements) disp.push_back(vec3_to_json(d));
    j["displacements"] = std::move(disp);
    out << j.dump() << '\n';
  }
}

std::vector<DeformRecord> read_deform_records(const std::filesystem::path& path) {
  std::vector<DeformRecord> out;
  for (const std::string& line : read_lines(path)) {
    const json j = json::parse(line);
    DeformRecord r;
    r.object_path = j.at("object");
    params_from_json(j, r.posture, r.position);
    r.contact_indices = j.at("contact").get<std::vector<int>>();
    r.amplitude = j.at("amplitude");
    for (const json& d : j.at("displacements")) r.displacements.push_back(vec3_from_json(d));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dvq::pipeline
