#include "skelbridge/geom/ply_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace skelbridge::geom {

OrientedPointCloud PlyContents::as_oriented() const {
  if (!normals) throw InvalidInputError("PLY has no normals");
  return OrientedPointCloud{pts, *normals};
}

namespace {

void write_ply_impl(const std::string& path, const Mat3& pts, const Mat3* normals) {
  std::ofstream out(path, std::ios::binary);  // binary: keep \n endings stable
  if (!out) throw IoError("cannot open for writing: " + path);
  const long n = static_cast<long>(pts.rows());
  out << "ply\nformat ascii 1.0\nelement vertex " << n << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (normals)
    out << "property float nx\nproperty float ny\nproperty float nz\n";
  out << "end_header\n";

  char buf[160];
  for (long i = 0; i < n; ++i) {
    // %.9g round-trips 32-bit floats exactly
    if (normals) {
      std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g %.9g %.9g %.9g\n",
                    static_cast<float>(pts(i, 0)), static_cast<float>(pts(i, 1)),
                    static_cast<float>(pts(i, 2)), static_cast<float>((*normals)(i, 0)),
                    static_cast<float>((*normals)(i, 1)), static_cast<float>((*normals)(i, 2)));
    } else {
      std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", static_cast<float>(pts(i, 0)),
                    static_cast<float>(pts(i, 1)), static_cast<float>(pts(i, 2)));
    }
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

void write_ply(const std::string& path, const Mat3& pts) { write_ply_impl(path, pts, nullptr); }

void write_ply(const std::string& path, const Mat3& pts, const Mat3& normals) {
  if (pts.rows() != normals.rows())
    throw InvalidInputError("write_ply: position/normal count mismatch");
  write_ply_impl(path, pts, &normals);
}

void write_ply(const std::string& path, const OrientedPointCloud& cloud) {
  write_ply(path, cloud.pts, cloud.normals);
}

PlyContents read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);

  int line_no = 0;
  std::string line;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
    return true;
  };

  if (!next_line() || line != "ply") throw ParseError("expected 'ply' magic", line_no);
  if (!next_line() || line != "format ascii 1.0")
    throw ParseError("expected 'format ascii 1.0'", line_no);

  long vertex_count = -1;
  std::vector<std::string> props;
  bool in_vertex_element = false;
  while (true) {
    if (!next_line()) throw ParseError("unexpected end of header", line_no);
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment") continue;
    if (tok == "element") {
      std::string name;
      long count = 0;
      if (!(ls >> name >> count)) throw ParseError("malformed element line", line_no);
      in_vertex_element = name == "vertex";
      if (in_vertex_element) vertex_count = count;
      else if (count != 0)
        throw ParseError("unsupported element '" + name + "'", line_no);
    } else if (tok == "property") {
      std::string type, name;
      if (!(ls >> type >> name)) throw ParseError("malformed property line", line_no);
      if (!in_vertex_element) continue;
      if (type != "float" && type != "float32")
        throw ParseError("unsupported property type '" + type + "'", line_no);
      props.push_back(name);
    } else {
      throw ParseError("unrecognized header line", line_no);
    }
  }
  if (vertex_count < 0) throw ParseError("no vertex element", line_no);

  const std::vector<std::string> xyz = {"x", "y", "z"};
  const std::vector<std::string> xyzn = {"x", "y", "z", "nx", "ny", "nz"};
  bool with_normals;
  if (props == xyz) with_normals = false;
  else if (props == xyzn) with_normals = true;
  else throw ParseError("vertex properties must be x,y,z[,nx,ny,nz]", line_no);

  PlyContents out;
  out.pts.resize(vertex_count, 3);
  if (with_normals) out.normals.emplace(vertex_count, 3);
  for (long i = 0; i < vertex_count; ++i) {
    if (!next_line()) throw ParseError("unexpected end of vertex data", line_no);
    std::istringstream ls(line);
    double v[6];
    const int want = with_normals ? 6 : 3;
    for (int c = 0; c < want; ++c)
      if (!(ls >> v[c])) throw ParseError("malformed vertex row", line_no);
    out.pts.row(i) = Vec3(v[0], v[1], v[2]);
    if (with_normals) out.normals->row(i) = Vec3(v[3], v[4], v[5]);
  }
  return out;
}

}  // namespace skelbridge::geom
