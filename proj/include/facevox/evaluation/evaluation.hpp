#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "facevox/geometry/types.hpp"

namespace facevox::evaluation {

/// |pred > T  and  truth > T| / |pred > T  or  truth > T|; 1 when both
/// sets are empty.
double iou(const geometry::VoxelGrid& pred, const geometry::VoxelGrid& truth, double threshold = 0.5);

/// Mean binary cross-entropy with predictions clipped to [1e-7, 1 - 1e-7].
double ce_metric(const geometry::VoxelGrid& pred, const geometry::VoxelGrid& truth);

/// Symmetric Hausdorff distance between two non-empty point sets, by
/// exhaustive search.
double hausdorff(std::span<const geometry::Vec3> a, std::span<const geometry::Vec3> b);

/// Centres (x + 0.5, y + 0.5, z + 0.5) of voxels above `threshold`, in grid
/// index order.
std::vector<geometry::Vec3> occupied_centers(const geometry::VoxelGrid& grid, double threshold);

/// Squared distance, in voxel edges, from every voxel centre to the
/// nearest occupied voxel centre (exact Euclidean distance transform).
/// Throws std::invalid_argument when no voxel is occupied.
std::vector<double> squared_distance_to_occupied(const geometry::VoxelGrid& grid, double threshold);

/// Hausdorff distance between the occupied voxel centres of two grids,
/// computed through distance transforms.
double hausdorff(const geometry::VoxelGrid& a, const geometry::VoxelGrid& b, double threshold = 0.5);

/// For every predicted voxel above `threshold`, in grid index order, the
/// distance to the nearest occupied truth voxel centre.
std::vector<double> per_point_distance_field(const geometry::VoxelGrid& pred, const geometry::VoxelGrid& truth,
                                             double threshold = 0.5);

/// Boundary faces of the voxels above `threshold`: two triangles per face
/// not shared with another occupied voxel, outward facing, vertices on
/// integer grid corners and deduplicated.
geometry::TriMesh extract_surface(const geometry::VoxelGrid& grid, double threshold = 0.5);

struct SurfaceWithField {
  geometry::TriMesh mesh;
  /// One value per mesh vertex: the distance of the first voxel (in
  /// emission order) that produced the vertex.
  std::vector<double> vertex_distance;
};

SurfaceWithField extract_surface_with_distance(const geometry::VoxelGrid& pred, const geometry::VoxelGrid& truth,
                                               double threshold = 0.5);

struct MetricReport {
  double threshold = 0.5;
  std::vector<std::string> ids;
  std::vector<double> iou;
  std::vector<double> ce;

  std::size_t count() const { return ids.size(); }
  void add(std::string id, double iou_value, double ce_value);
  double mean_iou() const;
  double mean_ce() const;
};

/// `id<TAB>iou<TAB>ce` per sample, then `MEAN<TAB>iou<TAB>ce`.
std::string encode_report(const MetricReport& report);
MetricReport decode_report(const std::string& text);

}  // namespace facevox::evaluation
