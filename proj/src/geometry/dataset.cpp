#include "facevox/geometry/dataset.hpp"

#include <random>
#include <stdexcept>

namespace facevox::geometry {

void SynthSettings::validate() const {
  if (view_size < 8) throw std::invalid_argument("synth: view size must be at least 8");
  if (identity_count < 4) throw std::invalid_argument("synth: need at least 4 identity coefficients");
  for (double a : {max_yaw, max_pitch, max_roll}) {
    if (!(a >= 0.0 && a <= 90.0)) throw std::invalid_argument("synth: pose ranges must lie in [0, 90] degrees");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synth: noise sigma must be non-negative");
  if (!(hole_radius >= 0.0)) throw std::invalid_argument("synth: hole radius must be non-negative");
}

FaceParams draw_face_params(std::uint64_t seed, const SynthSettings& settings) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x66616365u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> open(0.0, 1.0);
  FaceParams p;
  p.identity.resize(settings.identity_count);
  for (auto& c : p.identity) c = unit(rng);
  p.expression = open(rng);
  p.pose.yaw = settings.max_yaw * unit(rng);
  p.pose.pitch = settings.max_pitch * unit(rng);
  p.pose.roll = settings.max_roll * unit(rng);
  return p;
}

SynthSample synth_sample(std::uint64_t seed, const SynthSettings& settings) {
  settings.validate();
  SynthSample s;
  s.seed = seed;
  s.params = draw_face_params(seed, settings);
  const auto face = synth_face(seed, s.params, settings.view_size, settings.mesh_resolution);
  const auto frame = face_frame(settings.view_size);
  s.grid = voxelize(face.mesh, face.projection, frame, settings.view_size);
  auto clean = render_depth(face.mesh, face.projection, frame);
  auto noisy = add_noise(clean, settings.noise_sigma, seed ^ 0x6e6f697365ull);
  s.depth = punch_holes(noisy, settings.holes, settings.hole_radius, seed ^ 0x686f6c6573ull);
  return s;
}

}  // namespace facevox::geometry
