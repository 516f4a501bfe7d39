#include <fstream>
#include <sstream>

#include "dvq/geom/mesh_io.hpp"
#include "dvq/hand/model.hpp"

namespace dvq::hand {

// Asset pair:
//   hand_template.ply   rest mesh (alpha = 0, identity pose)
//   hand_weights.txt    per-vertex line
//       vertex <index> part <name> contact <0|1> : <bone> <weight> [<bone> <weight>]
//   weights on each line sum to 1 within 1e-6

void HandModel::save_assets(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  geom::write_mesh(rest_mesh(), dir / "hand_template.ply", geom::MeshFormat::PlyBinary);

  std::ofstream out(dir / "hand_weights.txt");
  if (!out) throw std::runtime_error("cannot write hand weights sidecar");
  out << "# hand skinning weights v1\n";
  out << "# vertex <index> part <name> contact <0|1> : <bone> <weight> [<bone> <weight>]\n";
  for (size_t i = 0; i < weights_.size(); ++i) {
    out << "vertex " << i << " part " << part_name(part_labels_[i]) << " contact "
        << (contact_candidate_[i] ? 1 : 0) << " :";
    for (const SkinWeight& w : weights_[i]) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", w.weight);
      out << ' ' << w.bone << ' ' << buf;
    }
    out << '\n';
  }
}

bool HandModel::matches_assets(const std::filesystem::path& dir) const {
  const geom::TriMesh tmpl = geom::read_mesh(dir / "hand_template.ply");
  const geom::TriMesh rest = rest_mesh();
  if (tmpl.vertex_count() != rest.vertex_count() || tmpl.face_count() != rest.face_count())
    return false;
  for (int i = 0; i < rest.vertex_count(); ++i)
    if (norm(tmpl.vertices[i] - rest.vertices[i]) > 1e-12) return false;

  std::ifstream in(dir / "hand_weights.txt");
  if (!in) return false;
  std::string line;
  size_t seen = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag, part_tag, name, contact_tag, colon;
    size_t index;
    int contact;
    if (!(ls >> tag >> index >> part_tag >> name >> contact_tag >> contact >> colon) ||
        tag != "vertex" || colon != ":")
      return false;
    if (index >= weights_.size()) return false;
    if (name != part_name(part_labels_[index])) return false;
    if (contact != (contact_candidate_[index] ? 1 : 0)) return false;
    double total = 0;
    int bone;
    double w;
    size_t n = 0;
    while (ls >> bone >> w) {
      if (n >= weights_[index].size()) return false;
      if (weights_[index][n].bone != bone || std::abs(weights_[index][n].weight - w) > 1e-12)
        return false;
      total += w;
      ++n;
    }
    if (n != weights_[index].size()) return false;
    if (std::abs(total - 1.0) > 1e-6) return false;
    ++seen;
  }
  return seen == weights_.size();
}

}  // namespace dvq::hand
