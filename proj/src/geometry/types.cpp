#include "facevox/geometry/types.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace facevox::geometry {

Mat3 identity3() {
  Mat3 m{};
  for (int i = 0; i < 3; ++i) m[i][i] = 1.0;
  return m;
}

Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

Vec3 apply(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2], m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

void TriMesh::validate() const {
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (auto idx : triangles[t]) {
      if (idx >= vertices.size()) {
        throw std::invalid_argument("triangle " + std::to_string(t) + " references vertex " + std::to_string(idx) +
                                    " of " + std::to_string(vertices.size()));
      }
    }
  }
}

double TriMesh::triangle_area(std::size_t t) const {
  const auto& tri = triangles.at(t);
  const Vec3& a = vertices[tri[0]];
  const Vec3& b = vertices[tri[1]];
  const Vec3& c = vertices[tri[2]];
  const Vec3 e1{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const Vec3 e2{c[0] - a[0], c[1] - a[1], c[2] - a[2]};
  const Vec3 n{e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2], e1[0] * e2[1] - e1[1] * e2[0]};
  return 0.5 * std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
}

void ProjectionParams::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("projection scale must be positive");
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += rotation[k][i] * rotation[k][j];
      worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
    }
  }
  const auto& r = rotation;
  const double det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
                     r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
                     r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
  if (worst > 1e-9 || std::abs(det - 1.0) > 1e-9) throw std::invalid_argument("projection rotation is not a rotation");
}

std::size_t DepthView::foreground_count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](double v) { return v > 0.0; }));
}

bool VoxelGrid::is_binary() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0 || v == 1.0; });
}

std::size_t VoxelGrid::count_above(double threshold) const {
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [threshold](double v) { return v > threshold; }));
}

}  // namespace facevox::geometry
