#include "dvq/geom/mesh_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace dvq::geom {

namespace {

[[noreturn]] void fail(const std::string& name, int line, const std::string& what) {
  std::ostringstream os;
  os << name << ":" << line << ": " << what;
  throw std::runtime_error(os.str());
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TriMesh read_obj(std::istream& in, const std::string& name) {
  TriMesh mesh;
  std::vector<Vec3> file_normals;
  std::string line;
  int lineno = 0;
  int face_index = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x >> p.y >> p.z)) fail(name, lineno, "malformed vertex record");
      mesh.vertices.push_back(p);
    } else if (tag == "vn") {
      Vec3 n;
      if (!(ls >> n.x >> n.y >> n.z)) fail(name, lineno, "malformed normal record");
      file_normals.push_back(n);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        // accept v, v/vt, v//vn, v/vt/vn
        const size_t slash = tok.find('/');
        const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
        try {
          idx.push_back(std::stoi(head));
        } catch (const std::exception&) {
          fail(name, lineno, "malformed face index '" + tok + "'");
        }
      }
      if (idx.size() != 3) {
        std::ostringstream os;
        os << "face " << face_index << " has " << idx.size() << " vertices; only triangles are supported";
        fail(name, lineno, os.str());
      }
      Face f;
      for (int k = 0; k < 3; ++k) {
        int v = idx[k];
        if (v < 0) v = static_cast<int>(mesh.vertices.size()) + v + 1;  // relative indexing
        f[k] = v - 1;
      }
      mesh.faces.push_back(f);
      ++face_index;
    }
  }
  if (file_normals.size() == mesh.vertices.size() && !file_normals.empty())
    mesh.normals = std::move(file_normals);
  else
    recompute_normals(mesh);
  validate(mesh);
  return mesh;
}

void write_obj(const TriMesh& mesh, std::ostream& out) {
  for (const Vec3& v : mesh.vertices)
    out << "v " << fmt_double(v.x) << ' ' << fmt_double(v.y) << ' ' << fmt_double(v.z) << '\n';
  for (const Vec3& n : mesh.normals)
    out << "vn " << fmt_double(n.x) << ' ' << fmt_double(n.y) << ' ' << fmt_double(n.z) << '\n';
  for (const Face& f : mesh.faces)
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

namespace {

struct PlyProperty {
  std::string type;
  std::string name;
  bool is_list = false;
  std::string count_type;
};

struct PlyElement {
  std::string name;
  long count = 0;
  std::vector<PlyProperty> props;
};

size_t scalar_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw std::runtime_error("unknown ply scalar type '" + t + "'");
}

double read_binary_scalar(std::istream& in, const std::string& t) {
  unsigned char buf[8];
  const size_t n = scalar_size(t);
  in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("unexpected end of ply binary payload");
  if (t == "float" || t == "float32") {
    float f;
    std::memcpy(&f, buf, 4);
    return f;
  }
  if (t == "double" || t == "float64") {
    double d;
    std::memcpy(&d, buf, 8);
    return d;
  }
  // integer types, little endian
  long long v = 0;
  for (size_t i = 0; i < n; ++i) v |= static_cast<long long>(buf[i]) << (8 * i);
  const bool is_signed = t[0] != 'u';
  if (is_signed && n < 8) {
    const long long sign_bit = 1LL << (8 * n - 1);
    if (v & sign_bit) v -= sign_bit << 1;
  }
  return static_cast<double>(v);
}

}  // namespace

TriMesh read_ply(std::istream& in, const std::string& name) {
  std::string line;
  int lineno = 0;
  auto next_line = [&]() {
    if (!std::getline(in, line)) fail(name, lineno, "unexpected end of ply header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++lineno;
  };
  next_line();
  if (line != "ply") fail(name, lineno, "missing ply magic");
  bool binary = false;
  std::vector<PlyElement> elements;
  for (;;) {
    next_line();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "comment" || tag.empty()) continue;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else fail(name, lineno, "unsupported ply format '" + fmt + "'");
    } else if (tag == "element") {
      PlyElement e;
      if (!(ls >> e.name >> e.count)) fail(name, lineno, "malformed element record");
      elements.push_back(e);
    } else if (tag == "property") {
      if (elements.empty()) fail(name, lineno, "property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        p.is_list = true;
        if (!(ls >> p.count_type >> p.type >> p.name)) fail(name, lineno, "malformed list property");
      } else {
        p.type = t;
        if (!(ls >> p.name)) fail(name, lineno, "malformed property record");
      }
      elements.back().props.push_back(p);
    } else if (tag == "end_header") {
      break;
    } else {
      fail(name, lineno, "unknown header record '" + tag + "'");
    }
  }

  TriMesh mesh;
  bool has_normals = false;
  for (const PlyElement& e : elements) {
    if (e.name == "vertex") {
      for (const PlyProperty& p : e.props)
        if (p.name == "nx") has_normals = true;
      mesh.vertices.reserve(e.count);
      if (has_normals) mesh.normals.reserve(e.count);
      for (long i = 0; i < e.count; ++i) {
        Vec3 v, n;
        std::istringstream ls;
        if (!binary) {
          next_line();
          ls.str(line);
        }
        for (const PlyProperty& p : e.props) {
          double x = 0;
          if (binary) {
            x = read_binary_scalar(in, p.type);
          } else if (!(ls >> x)) {
            fail(name, lineno, "short vertex record");
          }
          if (p.name == "x") v.x = x;
          else if (p.name == "y") v.y = x;
          else if (p.name == "z") v.z = x;
          else if (p.name == "nx") n.x = x;
          else if (p.name == "ny") n.y = x;
          else if (p.name == "nz") n.z = x;
        }
        mesh.vertices.push_back(v);
        if (has_normals) mesh.normals.push_back(n);
      }
    } else if (e.name == "face") {
      mesh.faces.reserve(e.count);
      for (long i = 0; i < e.count; ++i) {
        const PlyProperty& p = e.props.at(0);
        long n = 0;
        Face f{};
        if (binary) {
          n = static_cast<long>(read_binary_scalar(in, p.count_type));
          if (n != 3) {
            std::ostringstream os;
            os << "face " << i << " has " << n << " vertices; only triangles are supported";
            fail(name, lineno, os.str());
          }
          for (int k = 0; k < 3; ++k) f[k] = static_cast<int>(read_binary_scalar(in, p.type));
        } else {
          next_line();
          std::istringstream ls(line);
          if (!(ls >> n)) fail(name, lineno, "malformed face record");
          if (n != 3) {
            std::ostringstream os;
            os << "face " << i << " has " << n << " vertices; only triangles are supported";
            fail(name, lineno, os.str());
          }
          for (int k = 0; k < 3; ++k)
            if (!(ls >> f[k])) fail(name, lineno, "short face record");
        }
        mesh.faces.push_back(f);
      }
    } else {
      // skip unknown elements
      for (long i = 0; i < e.count; ++i) {
        if (binary) {
          for (const PlyProperty& p : e.props) {
            if (p.is_list) {
              const long n = static_cast<long>(read_binary_scalar(in, p.count_type));
              for (long k = 0; k < n; ++k) read_binary_scalar(in, p.type);
            } else {
              read_binary_scalar(in, p.type);
            }
          }
        } else {
          next_line();
        }
      }
    }
  }
  if (!has_normals) recompute_normals(mesh);
  validate(mesh);
  return mesh;
}

void write_ply(const TriMesh& mesh, std::ostream& out, bool binary) {
  out << "ply\n";
  out << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
  out << "element vertex " << mesh.vertex_count() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  const bool with_normals = mesh.normals.size() == mesh.vertices.size();
  if (with_normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
  out << "element face " << mesh.face_count() << "\n";
  out << "property list uchar int vertex_indices\n";
  out << "end_header\n";
  if (binary) {
    for (int i = 0; i < mesh.vertex_count(); ++i) {
      double row[6] = {mesh.vertices[i].x, mesh.vertices[i].y, mesh.vertices[i].z, 0, 0, 0};
      int n = 3;
      if (with_normals) {
        row[3] = mesh.normals[i].x;
        row[4] = mesh.normals[i].y;
        row[5] = mesh.normals[i].z;
        n = 6;
      }
      out.write(reinterpret_cast<const char*>(row), n * 8);
    }
    for (const Face& f : mesh.faces) {
      const unsigned char count = 3;
      out.write(reinterpret_cast<const char*>(&count), 1);
      const int idx[3] = {f[0], f[1], f[2]};
      out.write(reinterpret_cast<const char*>(idx), 12);
    }
  } else {
    for (int i = 0; i < mesh.vertex_count(); ++i) {
      out << fmt_double(mesh.vertices[i].x) << ' ' << fmt_double(mesh.vertices[i].y) << ' '
          << fmt_double(mesh.vertices[i].z);
      if (with_normals)
        out << ' ' << fmt_double(mesh.normals[i].x) << ' ' << fmt_double(mesh.normals[i].y) << ' '
            << fmt_double(mesh.normals[i].z);
      out << '\n';
    }
    for (const Face& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  }
}

MeshFormat format_from_path(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".obj") return MeshFormat::Obj;
  if (ext == ".ply") return MeshFormat::PlyBinary;
  throw std::runtime_error("unsupported mesh extension '" + ext + "'");
}

TriMesh read_mesh(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open mesh file " + path.string());
  if (format_from_path(path) == MeshFormat::Obj) return read_obj(in, path.string());
  return read_ply(in, path.string());
}

void write_mesh(const TriMesh& mesh, const std::filesystem::path& path, MeshFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open mesh file for writing " + path.string());
  if (format == MeshFormat::Obj) write_obj(mesh, out);
  else write_ply(mesh, out, format == MeshFormat::PlyBinary);
}

}  // namespace dvq::geom
