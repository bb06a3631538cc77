#pragma once

#include <cstdint>

#include "facevox/geometry/geometry.hpp"

namespace facevox::geometry {

/// Ranges that synthetic training pairs are drawn from.
struct SynthSettings {
  std::size_t view_size = 32;
  std::size_t identity_count = 4;
  double max_yaw = 90.0;
  double max_pitch = 20.0;
  double max_roll = 15.0;
  double noise_sigma = 0.02;
  std::size_t holes = 0;
  double hole_radius = 2.0;
  std::size_t mesh_resolution = 40;

  void validate() const;
};

struct SynthSample {
  std::uint64_t seed = 0;
  FaceParams params;
  DepthView depth;  // noisy, possibly holed view fed to the generator
  VoxelGrid grid;   // binary surface occupancy
};

/// Face parameters drawn uniformly from the settings' ranges; a pure
/// function of the seed.
FaceParams draw_face_params(std::uint64_t seed, const SynthSettings& settings);

/// Draws, renders, corrupts and voxelizes one sample.
SynthSample synth_sample(std::uint64_t seed, const SynthSettings& settings);

}  // namespace facevox::geometry
