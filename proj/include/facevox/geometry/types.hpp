#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace facevox::geometry {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 identity3();
Mat3 multiply(const Mat3& a, const Mat3& b);
Vec3 apply(const Mat3& m, const Vec3& v);

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  /// Throws std::invalid_argument on out-of-range indices.
  void validate() const;
  double triangle_area(std::size_t t) const;
};

/// Weak-perspective camera: (u, v) = scale * P_r * R * V + translation.
struct ProjectionParams {
  double scale = 1.0;
  Mat3 rotation = identity3();
  std::array<double, 2> translation{0.0, 0.0};

  /// Throws std::invalid_argument unless scale > 0 and rotation is a proper
  /// rotation (orthonormal to 1e-9, determinant 1).
  void validate() const;
};

/// The cube shared by a depth view and its voxel grid: x and y are pixel
/// coordinates in [0, size), depth is camera-space z mapped affinely so
/// that z_far -> 0 and z_near -> 1. Larger z is nearer to the camera.
struct ViewFrame {
  std::size_t size = 32;
  double z_near = 1.0;
  double z_far = -1.0;

  double normalize(double z_cam) const { return (z_cam - z_far) / (z_near - z_far); }
};

/// Normalized depth raster. 0 marks background; foreground lies in (0, 1].
struct DepthView {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  DepthView() = default;
  DepthView(std::size_t w, std::size_t h) : width(w), height(h), values(w * h, 0.0) {}

  double& at(std::size_t x, std::size_t y) { return values[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
  std::size_t foreground_count() const;
};

/// n^3 occupancy values, x fastest, then y, then z (depth layer). Spans the
/// ViewFrame cube: voxel (x, y, k) covers pixel column (x, y) and
/// normalized depths [k/n, (k+1)/n].
struct VoxelGrid {
  std::size_t n = 0;
  std::vector<double> values;

  VoxelGrid() = default;
  explicit VoxelGrid(std::size_t extent) : n(extent), values(extent * extent * extent, 0.0) {}

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return x + n * (y + n * z); }
  double& at(std::size_t x, std::size_t y, std::size_t z) { return values[index(x, y, z)]; }
  double at(std::size_t x, std::size_t y, std::size_t z) const { return values[index(x, y, z)]; }

  bool is_binary() const;
  std::size_t count_above(double threshold) const;
};

/// Smallest foreground depth; values that would normalize to 0 or below
/// are clamped here so they never alias the background sentinel.
inline constexpr double kMinForegroundDepth = 1e-6;

}  // namespace facevox::geometry
