#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "dvq/geom/trimesh.hpp"

namespace dvq::geom {

enum class MeshFormat { Obj, PlyAscii, PlyBinary };

// Reads OBJ or PLY (ascii / binary_little_endian), picking the parser from
// the extension. Normals are recomputed when the file carries none.
// Malformed input throws with the offending line (or element) identified.
TriMesh read_mesh(const std::filesystem::path& path);
TriMesh read_obj(std::istream& in, const std::string& name = "<stream>");
TriMesh read_ply(std::istream& in, const std::string& name = "<stream>");

// Geometry is written with 17 significant digits so doubles round-trip.
void write_mesh(const TriMesh& mesh, const std::filesystem::path& path,
                MeshFormat format);
void write_obj(const TriMesh& mesh, std::ostream& out);
void write_ply(const TriMesh& mesh, std::ostream& out, bool binary);

MeshFormat format_from_path(const std::filesystem::path& path);

}  // namespace dvq::geom
