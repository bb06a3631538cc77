#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "facevox/geometry/geometry.hpp"

namespace facevox::geometry {

namespace {

double edge(const ProjectedVertex& a, const ProjectedVertex& b, double pu, double pv) {
  return (b.u - a.u) * (pv - a.v) - (b.v - a.v) * (pu - a.u);
}

// Top-left rule: with pixel rows growing downward and positive-area
// winding, top edges run in +u and left edges run in -v.
bool owns_edge(const ProjectedVertex& a, const ProjectedVertex& b) {
  const double dv = b.v - a.v;
  return dv < 0.0 || (dv == 0.0 && b.u > a.u);
}

bool inside(double w, bool owned) { return w > 0.0 || (w == 0.0 && owned); }

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

double clamp_depth(double d) { return std::clamp(d, kMinForegroundDepth, 1.0); }

}  // namespace

std::vector<ProjectedVertex> project(const TriMesh& mesh, const ProjectionParams& params) {
  params.validate();
  std::vector<ProjectedVertex> out;
  out.reserve(mesh.vertices.size());
  for (const auto& p : mesh.vertices) {
    const Vec3 r = apply(params.rotation, p);
    out.push_back({params.scale * r[0] + params.translation[0], params.scale * r[1] + params.translation[1],
                   params.scale * r[2]});
  }
  return out;
}

DepthView render_depth(const TriMesh& mesh, const ProjectionParams& params, const ViewFrame& frame) {
  if (frame.size < 8) throw std::invalid_argument("render_depth: view size must be at least 8");
  mesh.validate();
  const std::size_t size = frame.size;
  DepthView out(size, size);
  if (mesh.empty()) return out;

  const auto proj = project(mesh, params);
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  std::vector<double> zbuf(size * size, kNone);
  const double limit = static_cast<double>(size) - 1.0;

  for (const auto& tri : mesh.triangles) {
    ProjectedVertex p0 = proj[tri[0]], p1 = proj[tri[1]], p2 = proj[tri[2]];
    double area = edge(p0, p1, p2.u, p2.v);
    if (area == 0.0 || !std::isfinite(area)) continue;
    if (area < 0.0) {
      std::swap(p1, p2);
      area = -area;
    }
    const double umin = std::min({p0.u, p1.u, p2.u}), umax = std::max({p0.u, p1.u, p2.u});
    const double vmin = std::min({p0.v, p1.v, p2.v}), vmax = std::max({p0.v, p1.v, p2.v});
    const double x0 = std::max(0.0, std::ceil(umin - 0.5)), x1 = std::min(limit, std::floor(umax - 0.5));
    const double y0 = std::max(0.0, std::ceil(vmin - 0.5)), y1 = std::min(limit, std::floor(vmax - 0.5));
    if (x0 > x1 || y0 > y1) continue;

    const bool own0 = owns_edge(p1, p2), own1 = owns_edge(p2, p0), own2 = owns_edge(p0, p1);
    for (auto y = static_cast<std::size_t>(y0); y <= static_cast<std::size_t>(y1); ++y) {
      const double pv = static_cast<double>(y) + 0.5;
      for (auto x = static_cast<std::size_t>(x0); x <= static_cast<std::size_t>(x1); ++x) {
        const double pu = static_cast<double>(x) + 0.5;
        const double w0 = edge(p1, p2, pu, pv), w1 = edge(p2, p0, pu, pv), w2 = edge(p0, p1, pu, pv);
        if (!inside(w0, own0) || !inside(w1, own1) || !inside(w2, own2)) continue;
        const double z = (w0 * p0.z + w1 * p1.z + w2 * p2.z) / area;
        auto& slot = zbuf[y * size + x];
        if (z > slot) slot = z;
      }
    }
  }

  for (std::size_t i = 0; i < zbuf.size(); ++i) {
    if (zbuf[i] != kNone) out.values[i] = clamp_depth(frame.normalize(zbuf[i]));
  }
  return out;
}

bool triangle_box_overlap(const Vec3& center, const Vec3& half, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 v0 = sub(a, center), v1 = sub(b, center), v2 = sub(c, center);

  for (int k = 0; k < 3; ++k) {
    const double lo = std::min({v0[k], v1[k], v2[k]}), hi = std::max({v0[k], v1[k], v2[k]});
    if (lo > half[k] || hi < -half[k]) return false;
  }

  const Vec3 e0 = sub(v1, v0), e1 = sub(v2, v1), e2 = sub(v0, v2);
  const Vec3 normal = cross(e0, e1);
  const double reach =
      half[0] * std::abs(normal[0]) + half[1] * std::abs(normal[1]) + half[2] * std::abs(normal[2]);
  if (std::abs(dot(normal, v0)) > reach) return false;

  const Vec3 edges[3] = {e0, e1, e2};
  const Vec3 units[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (const auto& e : edges) {
    for (const auto& unit : units) {
      const Vec3 axis = cross(unit, e);
      const double p0 = dot(axis, v0), p1 = dot(axis, v1), p2 = dot(axis, v2);
      const double r = half[0] * std::abs(axis[0]) + half[1] * std::abs(axis[1]) + half[2] * std::abs(axis[2]);
      if (std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r) return false;
    }
  }
  return true;
}

VoxelGrid voxelize(const TriMesh& mesh, const ProjectionParams& params, const ViewFrame& frame, std::size_t n) {
  if (n < 8) throw std::invalid_argument("voxelize: grid extent must be at least 8");
  mesh.validate();
  VoxelGrid grid(n);
  if (mesh.empty()) return grid;

  const auto proj = project(mesh, params);
  const double lateral = static_cast<double>(n) / static_cast<double>(frame.size);
  const double dn = static_cast<double>(n);
  std::vector<Vec3> pts;
  pts.reserve(proj.size());
  for (const auto& p : proj) pts.push_back({p.u * lateral, p.v * lateral, frame.normalize(p.z) * dn});

  const Vec3 half{0.5, 0.5, 0.5};
  const auto last = static_cast<long>(n) - 1;
  for (const auto& tri : mesh.triangles) {
    const Vec3& a = pts[tri[0]];
    const Vec3& b = pts[tri[1]];
    const Vec3& c = pts[tri[2]];
    long lo[3], hi[3];
    bool empty = false;
    for (int k = 0; k < 3; ++k) {
      // Closed boxes: a coordinate on an integer plane touches both sides.
      lo[k] = std::max(0L, static_cast<long>(std::ceil(std::min({a[k], b[k], c[k]}))) - 1);
      hi[k] = std::min(last, static_cast<long>(std::floor(std::max({a[k], b[k], c[k]}))));
      empty = empty || lo[k] > hi[k];
    }
    if (empty) continue;
    for (long z = lo[2]; z <= hi[2]; ++z) {
      for (long y = lo[1]; y <= hi[1]; ++y) {
        for (long x = lo[0]; x <= hi[0]; ++x) {
          auto& cell = grid.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z));
          if (cell == 1.0) continue;
          const Vec3 center{static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5, static_cast<double>(z) + 0.5};
          if (triangle_box_overlap(center, half, a, b, c)) cell = 1.0;
        }
      }
    }
  }
  return grid;
}

DepthView depth_from_grid(const VoxelGrid& grid, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("depth_from_grid: threshold outside (0, 1)");
  const std::size_t n = grid.n;
  DepthView out(n, n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      for (std::size_t k = n; k-- > 0;) {
        if (grid.at(x, y, k) > threshold) {
          out.at(x, y) = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
          break;
        }
      }
    }
  }
  return out;
}

DepthView add_noise(const DepthView& depth, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("add_noise: sigma must be non-negative");
  DepthView out = depth;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& v : out.values) {
    if (v > 0.0) v = clamp_depth(v + noise(rng));
  }
  return out;
}

DepthView punch_holes(const DepthView& depth, std::size_t count, double radius_px, std::uint64_t seed) {
  if (!(radius_px >= 0.0)) throw std::invalid_argument("punch_holes: radius must be non-negative");
  DepthView out = depth;
  std::mt19937_64 rng(seed);
  const auto reach = static_cast<long>(std::floor(radius_px));
  const double r2 = radius_px * radius_px;
  for (std::size_t h = 0; h < count; ++h) {
    std::vector<std::size_t> foreground;
    for (std::size_t i = 0; i < out.values.size(); ++i)
      if (out.values[i] > 0.0) foreground.push_back(i);
    if (foreground.empty()) break;
    std::uniform_int_distribution<std::size_t> pick(0, foreground.size() - 1);
    const std::size_t centre = foreground[pick(rng)];
    const auto cx = static_cast<long>(centre % out.width), cy = static_cast<long>(centre / out.width);
    for (long dy = -reach; dy <= reach; ++dy) {
      for (long dx = -reach; dx <= reach; ++dx) {
        const long x = cx + dx, y = cy + dy;
        if (x < 0 || y < 0 || x >= static_cast<long>(out.width) || y >= static_cast<long>(out.height)) continue;
        if (static_cast<double>(dx * dx + dy * dy) <= r2) out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 0.0;
      }
    }
  }
  return out;
}

}  // namespace facevox::geometry
