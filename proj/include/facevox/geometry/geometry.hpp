#pragma once

#include <cstdint>
#include <vector>

#include "facevox/geometry/types.hpp"

namespace facevox::geometry {

// ---------------------------------------------------------------------------
// Procedural faces

struct Pose {
  double yaw = 0.0;    // degrees about the vertical axis
  double pitch = 0.0;  // degrees about the horizontal axis
  double roll = 0.0;   // degrees about the viewing axis
};

struct FaceParams {
  /// At least four shape coefficients, nominally in [-1, 1]: width,
  /// height, depth and nose prominence; further entries add symmetric
  /// low-frequency relief.
  std::vector<double> identity{0.0, 0.0, 0.0, 0.0};
  double expression = 0.0;  // mouth opening in [0, 1]
  Pose pose;
};

struct FaceSample {
  TriMesh mesh;
  ProjectionParams projection;
};

/// Rotation applying yaw first, then pitch, then roll.
Mat3 pose_rotation(const Pose& pose);

/// Height-field face over an elliptical patch: ellipsoidal base, nose ridge,
/// eye sockets, and a mouth depression deepened by `expression`. The seed
/// drives a small mirror-symmetric relief so distinct seeds give distinct
/// surfaces. The camera is scaled so the face spans about 80% of the view.
FaceSample synth_face(std::uint64_t seed, const FaceParams& params, std::size_t view_size,
                      std::size_t resolution = 40);

/// Depth normalization shared by every face synthesized for `view_size`.
/// The camera scaling in synth_face bounds |z_cam| by 0.4 * view_size for
/// any pose, so this frame holds for the whole dataset.
ViewFrame face_frame(std::size_t view_size);

// ---------------------------------------------------------------------------
// Projection and rendering

struct ProjectedVertex {
  double u = 0.0;
  double v = 0.0;
  double z = 0.0;  // camera-space depth, f * (R V).z
};

std::vector<ProjectedVertex> project(const TriMesh& mesh, const ProjectionParams& params);

/// Z-buffer rasterization at pixel centres with the top-left fill rule;
/// the largest interpolated z wins and is normalized through `frame`.
DepthView render_depth(const TriMesh& mesh, const ProjectionParams& params, const ViewFrame& frame);

/// Surface voxelization: a voxel is set iff a triangle overlaps its closed
/// box (separating-axis test). The grid covers the frame cube at `n`
/// voxels per side.
VoxelGrid voxelize(const TriMesh& mesh, const ProjectionParams& params, const ViewFrame& frame, std::size_t n);

/// Separating-axis overlap between a triangle and an axis-aligned box.
/// Touching counts as overlap.
bool triangle_box_overlap(const Vec3& center, const Vec3& half, const Vec3& a, const Vec3& b, const Vec3& c);

/// Per column, the nearest voxel above `threshold` gives depth (k + 0.5)/n.
DepthView depth_from_grid(const VoxelGrid& grid, double threshold);

// ---------------------------------------------------------------------------
// Corruption

DepthView add_noise(const DepthView& depth, double sigma, std::uint64_t seed);

/// Clears `count` discs of radius `radius_px` centred on random foreground
/// pixels. A pixel is inside when its centre lies within the radius.
DepthView punch_holes(const DepthView& depth, std::size_t count, double radius_px, std::uint64_t seed);

}  // namespace facevox::geometry
