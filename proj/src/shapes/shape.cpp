#include "skelbridge/shapes/shape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace skelbridge::shapes {

namespace {

// redraw band around other primitives' surfaces; keeps sampled points
// strictly on the union boundary and finite-difference checkable
constexpr double kJunctionClearance = 1e-5;

double min_core_gap(const SweptPrimitive& p, const SweptPrimitive& q, Rng& rng) {
  // sampled core-to-core distance; exact point-to-core on the q side
  const int probes = p.kind == SweptPrimitive::Kind::kCapsule ? 65 : 169;
  double best = std::numeric_limits<double>::infinity();
  if (p.kind == SweptPrimitive::Kind::kCapsule) {
    for (int i = 0; i < probes; ++i) {
      const double t = static_cast<double>(i) / (probes - 1);
      best = std::min(best, q.core_distance(p.a + t * (p.b - p.a)));
    }
  } else {
    const int side = 13;
    for (int i = 0; i < side; ++i) {
      for (int j = 0; j < side; ++j) {
        const double su = 2.0 * i / (side - 1) - 1.0;
        const double sv = 2.0 * j / (side - 1) - 1.0;
        best = std::min(best, q.core_distance(p.center + su * p.u + sv * p.v));
      }
    }
  }
  for (int i = 0; i < 32; ++i)
    best = std::min(best, q.core_distance(p.sample_core_point(rng)));
  return best;
}

bool union_connected(const std::vector<SweptPrimitive>& prims, Rng& rng) {
  const int n = static_cast<int>(prims.size());
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double gap = std::min(min_core_gap(prims[i], prims[j], rng),
                                  min_core_gap(prims[j], prims[i], rng));
      if (gap <= prims[i].r + prims[j].r - 1e-9) {
        adj[i].push_back(j);
        adj[j].push_back(i);
      }
    }
  }
  std::vector<char> seen(n, 0);
  std::vector<int> stack = {0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    for (int next : adj[cur])
      if (!seen[next]) {
        seen[next] = 1;
        ++reached;
        stack.push_back(next);
      }
  }
  return reached == n;
}

void normalize_shape(SyntheticShape& shape) {
  Vec3 lo, hi;
  shape.bounds(lo, hi);
  const Vec3 extent = hi - lo;
  const double max_extent = extent.maxCoeff();
  geom::UnitCubeTransform t;
  t.scale = max_extent > 0.0 ? 1.0 / max_extent : 1.0;
  t.translation = Vec3::Constant(0.5) - t.scale * (0.5 * (lo + hi));
  for (SweptPrimitive& p : shape.prims) p = p.transformed(t.scale, t.translation);
  shape.transform = t;
}

SyntheticShape build_table(Rng& rng) {
  SyntheticShape s;
  s.family = "table";
  const double ax = rng.uniform(0.30, 0.45);
  const double ay = rng.uniform(0.25, 0.45);
  const double h = rng.uniform(0.45, 0.70);
  const double rp = rng.uniform(0.020, 0.035);
  const double rl = rng.uniform(0.020, 0.040);
  const double inset = rng.uniform(0.04, 0.09);
  s.prims.push_back(
      SweptPrimitive::plate(Vec3(0, 0, h), Vec3(ax, 0, 0), Vec3(0, ay, 0), rp));
  for (int sx : {-1, 1})
    for (int sy : {-1, 1}) {
      const double x = sx * (ax - inset);
      const double y = sy * (ay - inset);
      s.prims.push_back(SweptPrimitive::capsule(Vec3(x, y, 0), Vec3(x, y, h), rl));
    }
  return s;
}

SyntheticShape build_lamp(Rng& rng) {
  SyntheticShape s;
  s.family = "lamp";
  const double h = rng.uniform(0.60, 0.90);
  const double rpole = rng.uniform(0.020, 0.035);
  s.prims.push_back(SweptPrimitive::capsule(Vec3(0, 0, 0), Vec3(0, 0, h), rpole));
  const double bx = rng.uniform(0.12, 0.20);
  const double by = rng.uniform(0.12, 0.20);
  s.prims.push_back(SweptPrimitive::plate(Vec3(0, 0, 0), Vec3(bx, 0, 0), Vec3(0, by, 0),
                                          rng.uniform(0.020, 0.030)));
  const double sx = rng.uniform(0.10, 0.18);
  const double sy = rng.uniform(0.10, 0.18);
  s.prims.push_back(SweptPrimitive::plate(Vec3(0, 0, h), Vec3(sx, 0, 0), Vec3(0, sy, 0),
                                          rng.uniform(0.020, 0.030)));
  return s;
}

SyntheticShape build_frame(Rng& rng) {
  SyntheticShape s;
  s.family = "frame";
  const double a = rng.uniform(0.25, 0.40);
  const double b = rng.uniform(0.25, 0.40);
  const double r = rng.uniform(0.025, 0.050);
  const Vec3 c0(a, b, 0), c1(a, -b, 0), c2(-a, -b, 0), c3(-a, b, 0);
  s.prims.push_back(SweptPrimitive::capsule(c0, c1, r));
  s.prims.push_back(SweptPrimitive::capsule(c1, c2, r));
  s.prims.push_back(SweptPrimitive::capsule(c2, c3, r));
  s.prims.push_back(SweptPrimitive::capsule(c3, c0, r));
  return s;
}

SyntheticShape build_cross(Rng& rng) {
  SyntheticShape s;
  s.family = "cross";
  const double a = rng.uniform(0.25, 0.40);
  const double b = rng.uniform(0.25, 0.40);
  const double c = rng.uniform(0.25, 0.40);
  const double r1 = rng.uniform(0.020, 0.040);
  const double r2 = rng.uniform(0.020, 0.040);
  s.prims.push_back(
      SweptPrimitive::plate(Vec3::Zero(), Vec3(a, 0, 0), Vec3(0, 0, c), r1));
  s.prims.push_back(
      SweptPrimitive::plate(Vec3::Zero(), Vec3(0, b, 0), Vec3(0, 0, c), r2));
  return s;
}

}  // namespace

double SyntheticShape::sdf(const Vec3& x) const {
  double best = std::numeric_limits<double>::infinity();
  for (const SweptPrimitive& p : prims) best = std::min(best, p.sdf(x));
  return best;
}

int SyntheticShape::owning_primitive(const Vec3& x) const {
  int best = 0;
  double best_sdf = prims[0].sdf(x);
  for (int i = 1; i < static_cast<int>(prims.size()); ++i) {
    const double s = prims[i].sdf(x);
    if (s < best_sdf) {
      best_sdf = s;
      best = i;
    }
  }
  return best;
}

void SyntheticShape::bounds(Vec3& lo, Vec3& hi) const {
  lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  hi = -lo;
  for (const SweptPrimitive& p : prims) {
    Vec3 plo, phi;
    p.bounds(plo, phi);
    lo = lo.cwiseMin(plo);
    hi = hi.cwiseMax(phi);
  }
}

Vec3 SyntheticShape::sdf_gradient_fd(const Vec3& x, double h) const {
  Vec3 g;
  for (int c = 0; c < 3; ++c) {
    Vec3 xp = x, xm = x;
    xp(c) += h;
    xm(c) -= h;
    g(c) = (sdf(xp) - sdf(xm)) / (2.0 * h);
  }
  return g;
}

std::vector<std::string> default_families() { return {"table", "lamp", "frame", "cross"}; }

SyntheticShape make_shape(const std::string& family, std::uint64_t seed) {
  Rng rng(seed ^ 0xABCD1234FEED5678ull);
  for (int attempt = 0; attempt < 32; ++attempt) {
    SyntheticShape s;
    if (family == "table") s = build_table(rng);
    else if (family == "lamp") s = build_lamp(rng);
    else if (family == "frame") s = build_frame(rng);
    else if (family == "cross") s = build_cross(rng);
    else throw InvalidInputError("unknown shape family '" + family + "'");
    s.seed = seed;
    Rng check_rng = rng.fork(17);
    if (!union_connected(s.prims, check_rng)) continue;
    normalize_shape(s);
    return s;
  }
  throw GenerationError("could not build a connected '" + family + "' shape");
}

SurfaceSample sample_surface_tagged(const SyntheticShape& shape, int count, Rng& rng) {
  if (count < 1) throw InvalidInputError("sample_surface: count must be >= 1");
  const int np = static_cast<int>(shape.prims.size());
  std::vector<double> areas(np);
  for (int i = 0; i < np; ++i) areas[i] = shape.prims[i].surface_area();
  const std::vector<int> per_prim = apportion_counts(areas, count);

  SurfaceSample out;
  out.cloud.pts.resize(count, 3);
  out.cloud.normals.resize(count, 3);
  out.owner.resize(count);
  int row = 0;
  for (int pi = 0; pi < np; ++pi) {
    const SweptPrimitive& prim = shape.prims[pi];
    long budget = 1000 + 200L * per_prim[pi];
    for (int k = 0; k < per_prim[pi]; ++k) {
      bool placed = false;
      while (budget-- > 0) {
        Vec3 point, normal;
        prim.sample_surface_point(rng, point, normal);
        bool clear = true;
        for (int qi = 0; qi < np && clear; ++qi) {
          if (qi == pi) continue;
          if (shape.prims[qi].sdf(point) < kJunctionClearance) clear = false;
        }
        if (!clear) continue;
        out.cloud.pts.row(row) = point;
        out.cloud.normals.row(row) = normal;
        out.owner[row] = pi;
        ++row;
        placed = true;
        break;
      }
      if (!placed)
        throw GenerationError("surface sampling exhausted attempts on primitive " +
                              std::to_string(pi) + " (swallowed by the union?)");
    }
  }
  return out;
}

geom::OrientedPointCloud sample_surface(const SyntheticShape& shape, int count, Rng& rng) {
  return sample_surface_tagged(shape, count, rng).cloud;
}

SkeletonSample sample_skeleton_tagged(const SyntheticShape& shape, int count, Rng& rng) {
  if (count < 1) throw InvalidInputError("sample_skeleton: count must be >= 1");
  const int np = static_cast<int>(shape.prims.size());
  std::vector<double> measures(np);
  for (int i = 0; i < np; ++i) measures[i] = shape.prims[i].core_measure();
  const std::vector<int> per_prim = apportion_counts(measures, count);

  SkeletonSample out;
  out.cloud.pts.resize(count, 3);
  out.owner.resize(count);
  int row = 0;
  for (int pi = 0; pi < np; ++pi) {
    for (int k = 0; k < per_prim[pi]; ++k) {
      out.cloud.pts.row(row) = shape.prims[pi].sample_core_point(rng);
      out.owner[row] = pi;
      ++row;
    }
  }
  return out;
}

geom::PointCloud sample_skeleton(const SyntheticShape& shape, int count, Rng& rng) {
  return sample_skeleton_tagged(shape, count, rng).cloud;
}

}  // namespace skelbridge::shapes
