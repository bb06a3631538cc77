#include "facevox/evaluation/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "facevox/core/ops.hpp"
#include "facevox/io/binary.hpp"
#include "facevox/io/formats.hpp"

namespace facevox::evaluation {

using geometry::Vec3;
using geometry::VoxelGrid;

namespace {

constexpr double kClip = 1e-7;
constexpr double kFar = 1e30;

void same_shape(const VoxelGrid& a, const VoxelGrid& b, const char* what) {
  if (a.n != b.n || a.values.size() != b.values.size()) {
    throw std::invalid_argument(std::string(what) + ": grids of extent " + std::to_string(a.n) + " and " +
                                std::to_string(b.n));
  }
}

void check_threshold(double t) {
  if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("threshold must lie in (0, 1)");
}

// Lower envelope of parabolas (Felzenszwalb and Huttenlocher), in place
// over `n` samples spaced `stride` apart.
void distance_1d(double* f, std::size_t n, std::size_t stride, std::vector<double>& tmp, std::vector<std::size_t>& v,
                 std::vector<double>& z) {
  for (std::size_t i = 0; i < n; ++i) tmp[i] = f[i * stride];
  std::size_t k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  auto meet = [&](std::size_t q, std::size_t p) {
    const double dq = static_cast<double>(q), dp = static_cast<double>(p);
    return ((tmp[q] + dq * dq) - (tmp[p] + dp * dp)) / (2.0 * dq - 2.0 * dp);
  };
  for (std::size_t q = 1; q < n; ++q) {
    double s = meet(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = meet(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double d = static_cast<double>(q) - static_cast<double>(v[k]);
    f[q * stride] = d * d + tmp[v[k]];
  }
}

std::uint64_t corner_key(std::size_t x, std::size_t y, std::size_t z) {
  return (static_cast<std::uint64_t>(x) << 42) | (static_cast<std::uint64_t>(y) << 21) | static_cast<std::uint64_t>(z);
}

// Quad corners per face as offsets, counter-clockwise seen from outside.
// Order: -x, +x, -y, +y, -z, +z.
constexpr int kFaceCorners[6][4][3] = {
    {{0, 0, 0}, {0, 0, 1}, {0, 1, 1}, {0, 1, 0}}, {{1, 0, 0}, {1, 1, 0}, {1, 1, 1}, {1, 0, 1}},
    {{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1}}, {{0, 1, 0}, {0, 1, 1}, {1, 1, 1}, {1, 1, 0}},
    {{0, 0, 0}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}}, {{0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}},
};
constexpr int kFaceNormal[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};

// Emits the boundary and calls `on_new_vertex(voxel_index)` for each new
// vertex, in emission order.
template <typename OnNewVertex>
geometry::TriMesh surface(const VoxelGrid& grid, double threshold, OnNewVertex on_new_vertex) {
  check_threshold(threshold);
  const std::size_t n = grid.n;
  const auto occupied = [&](long x, long y, long z) {
    const long ln = static_cast<long>(n);
    if (x < 0 || y < 0 || z < 0 || x >= ln || y >= ln || z >= ln) return false;
    return grid.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z)) > threshold;
  };
  geometry::TriMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> ids;
  for (std::size_t z = 0; z < n; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const auto lx = static_cast<long>(x), ly = static_cast<long>(y), lz = static_cast<long>(z);
        if (!occupied(lx, ly, lz)) continue;
        for (int f = 0; f < 6; ++f) {
          if (occupied(lx + kFaceNormal[f][0], ly + kFaceNormal[f][1], lz + kFaceNormal[f][2])) continue;
          std::uint32_t quad[4];
          for (int c = 0; c < 4; ++c) {
            const std::size_t cx = x + kFaceCorners[f][c][0], cy = y + kFaceCorners[f][c][1],
                              cz = z + kFaceCorners[f][c][2];
            auto [it, fresh] = ids.emplace(corner_key(cx, cy, cz), static_cast<std::uint32_t>(mesh.vertices.size()));
            if (fresh) {
              mesh.vertices.push_back({static_cast<double>(cx), static_cast<double>(cy), static_cast<double>(cz)});
              on_new_vertex(grid.index(x, y, z));
            }
            quad[c] = it->second;
          }
          mesh.triangles.push_back({quad[0], quad[1], quad[2]});
          mesh.triangles.push_back({quad[0], quad[2], quad[3]});
        }
      }
  return mesh;
}

}  // namespace

double iou(const VoxelGrid& pred, const VoxelGrid& truth, double threshold) {
  same_shape(pred, truth, "iou");
  check_threshold(threshold);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const bool p = pred.values[i] > threshold, t = truth.values[i] > threshold;
    inter += p && t;
    uni += p || t;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double ce_metric(const VoxelGrid& pred, const VoxelGrid& truth) {
  same_shape(pred, truth, "ce_metric");
  std::vector<double> terms(pred.values.size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const double y = std::clamp(pred.values[i], kClip, 1.0 - kClip);
    const double t = truth.values[i];
    terms[i] = -(t * std::log(y) + (1.0 - t) * std::log(1.0 - y));
  }
  return core::pairwise_sum(terms.data(), terms.size()) / static_cast<double>(terms.size());
}

double hausdorff(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("hausdorff: empty point set");
  auto directed = [](std::span<const Vec3> from, std::span<const Vec3> to) {
    double worst = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
        best = std::min(best, dx * dx + dy * dy + dz * dz);
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::sqrt(std::max(directed(a, b), directed(b, a)));
}

std::vector<Vec3> occupied_centers(const VoxelGrid& grid, double threshold) {
  std::vector<Vec3> out;
  const std::size_t n = grid.n;
  for (std::size_t z = 0; z < n; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        if (grid.at(x, y, z) > threshold)
          out.push_back({static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5, static_cast<double>(z) + 0.5});
  return out;
}

std::vector<double> squared_distance_to_occupied(const VoxelGrid& grid, double threshold) {
  check_threshold(threshold);
  const std::size_t n = grid.n;
  std::vector<double> d(grid.values.size());
  bool any = false;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool on = grid.values[i] > threshold;
    any = any || on;
    d[i] = on ? 0.0 : kFar;
  }
  if (!any) throw std::invalid_argument("distance transform: no occupied voxel");
  std::vector<double> tmp(n), z(n + 1);
  std::vector<std::size_t> v(n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) distance_1d(&d[grid.index(0, a, b)], n, 1, tmp, v, z);  // along x
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) distance_1d(&d[grid.index(a, 0, b)], n, n, tmp, v, z);  // along y
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) distance_1d(&d[grid.index(a, b, 0)], n, n * n, tmp, v, z);  // along z
  return d;
}

double hausdorff(const VoxelGrid& a, const VoxelGrid& b, double threshold) {
  same_shape(a, b, "hausdorff");
  const auto da = squared_distance_to_occupied(a, threshold);
  const auto db = squared_distance_to_occupied(b, threshold);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (a.values[i] > threshold) worst = std::max(worst, db[i]);
    if (b.values[i] > threshold) worst = std::max(worst, da[i]);
  }
  return std::sqrt(worst);
}

std::vector<double> per_point_distance_field(const VoxelGrid& pred, const VoxelGrid& truth, double threshold) {
  same_shape(pred, truth, "per_point_distance_field");
  const auto dt = squared_distance_to_occupied(truth, threshold);
  std::vector<double> out;
  for (std::size_t i = 0; i < pred.values.size(); ++i)
    if (pred.values[i] > threshold) out.push_back(std::sqrt(dt[i]));
  return out;
}

geometry::TriMesh extract_surface(const VoxelGrid& grid, double threshold) {
  return surface(grid, threshold, [](std::size_t) {});
}

SurfaceWithField extract_surface_with_distance(const VoxelGrid& pred, const VoxelGrid& truth, double threshold) {
  same_shape(pred, truth, "extract_surface_with_distance");
  const auto dt = squared_distance_to_occupied(truth, threshold);
  SurfaceWithField out;
  out.mesh = surface(pred, threshold, [&](std::size_t voxel) { out.vertex_distance.push_back(std::sqrt(dt[voxel])); });
  return out;
}

// ---------------------------------------------------------------------------

void MetricReport::add(std::string id, double iou_value, double ce_value) {
  ids.push_back(std::move(id));
  iou.push_back(iou_value);
  ce.push_back(ce_value);
}

double MetricReport::mean_iou() const {
  if (iou.empty()) return 0.0;
  return core::pairwise_sum(iou.data(), iou.size()) / static_cast<double>(iou.size());
}

double MetricReport::mean_ce() const {
  if (ce.empty()) return 0.0;
  return core::pairwise_sum(ce.data(), ce.size()) / static_cast<double>(ce.size());
}

std::string encode_report(const MetricReport& r) {
  std::string out;
  for (std::size_t i = 0; i < r.count(); ++i) {
    out += r.ids[i] + '\t' + io::format_double(r.iou[i]) + '\t' + io::format_double(r.ce[i]) + '\n';
  }
  out += "MEAN\t" + io::format_double(r.mean_iou()) + '\t' + io::format_double(r.mean_ce()) + '\n';
  return out;
}

MetricReport decode_report(const std::string& text) {
  MetricReport r;
  std::istringstream in(text);
  std::string line;
  bool saw_mean = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) throw io::FormatError("metric report: expected 3 tab-separated fields");
    const std::string id = line.substr(0, a);
    const double iou_v = std::stod(line.substr(a + 1, b - a - 1));
    const double ce_v = std::stod(line.substr(b + 1));
    if (id == "MEAN") {
      saw_mean = true;
    } else {
      r.add(id, iou_v, ce_v);
    }
  }
  if (!saw_mean) throw io::FormatError("metric report: missing MEAN line");
  return r;
}

}  // namespace facevox::evaluation
