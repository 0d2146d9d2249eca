#pragma once

#include <optional>
#include <string>

#include "skelbridge/geom/point_cloud.hpp"

namespace skelbridge::geom {

struct PlyContents {
  Mat3 pts;
  std::optional<Mat3> normals;

  bool has_normals() const { return normals.has_value(); }
  PointCloud as_cloud() const { return PointCloud{pts}; }
  OrientedPointCloud as_oriented() const;
};

/// ASCII PLY with vertex properties x,y,z stored as 32-bit floats.
void write_ply(const std::string& path, const Mat3& pts);
/// ASCII PLY with vertex properties x,y,z,nx,ny,nz stored as 32-bit floats.
void write_ply(const std::string& path, const Mat3& pts, const Mat3& normals);
void write_ply(const std::string& path, const OrientedPointCloud& cloud);

/// Reads ASCII PLY vertices (and normals when present). Malformed input
/// raises ParseError carrying the offending line number.
PlyContents read_ply(const std::string& path);

}  // namespace skelbridge::geom
