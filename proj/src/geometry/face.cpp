#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "facevox/geometry/geometry.hpp"

namespace facevox::geometry {

namespace {

constexpr double kViewFill = 0.8;

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

// Uniform in [-1, 1) from the raw generator output, independent of the
// standard library's distribution implementations.
double signed_unit(std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

double gauss2(double ds, double dt, double ss, double st) {
  return std::exp(-(ds * ds) / (ss * ss) - (dt * dt) / (st * st));
}

void check_angle(double deg, const char* name) {
  if (!(deg >= -90.0 && deg <= 90.0)) {
    throw std::invalid_argument(std::string(name) + " angle " + std::to_string(deg) + " outside [-90, 90]");
  }
}

struct Relief {
  double amplitude;
  int freq_s;  // even harmonics in s keep the face mirror-symmetric
  int freq_t;
  double phase;
};

}  // namespace

Mat3 pose_rotation(const Pose& pose) {
  const double y = radians(pose.yaw), p = radians(pose.pitch), r = radians(pose.roll);
  const Mat3 yaw{{{std::cos(y), 0.0, std::sin(y)}, {0.0, 1.0, 0.0}, {-std::sin(y), 0.0, std::cos(y)}}};
  const Mat3 pitch{{{1.0, 0.0, 0.0}, {0.0, std::cos(p), -std::sin(p)}, {0.0, std::sin(p), std::cos(p)}}};
  const Mat3 roll{{{std::cos(r), -std::sin(r), 0.0}, {std::sin(r), std::cos(r), 0.0}, {0.0, 0.0, 1.0}}};
  return multiply(roll, multiply(pitch, yaw));
}

ViewFrame face_frame(std::size_t view_size) {
  const double half_depth = 0.42 * static_cast<double>(view_size);
  return ViewFrame{view_size, half_depth, -half_depth};
}

FaceSample synth_face(std::uint64_t seed, const FaceParams& params, std::size_t view_size, std::size_t resolution) {
  if (params.identity.size() < 4) throw std::invalid_argument("synth_face: need at least 4 identity coefficients");
  if (!(params.expression >= 0.0 && params.expression <= 1.0)) {
    throw std::invalid_argument("synth_face: expression outside [0, 1]");
  }
  check_angle(params.pose.yaw, "yaw");
  check_angle(params.pose.pitch, "pitch");
  check_angle(params.pose.roll, "roll");
  if (view_size < 8) throw std::invalid_argument("synth_face: view size must be at least 8");
  if (resolution < 4 || resolution % 2 != 0) throw std::invalid_argument("synth_face: resolution must be even, >= 4");

  const auto& id = params.identity;
  const double width = 0.75 * (1.0 + 0.15 * id[0]);
  const double height = 1.0 * (1.0 + 0.12 * id[1]);
  const double depth = 0.55 * (1.0 + 0.20 * id[2]);
  const double nose = 0.26 * (1.0 + 0.35 * id[3]);
  const double expr = params.expression;

  std::mt19937_64 rng(seed);
  std::vector<Relief> relief;
  for (int m = 0; m < 6; ++m) {
    Relief r{};
    r.amplitude = 0.015 * signed_unit(rng);
    r.freq_s = 2 * (1 + m % 2);
    r.freq_t = 1 + m / 2;
    r.phase = std::numbers::pi * signed_unit(rng);
    relief.push_back(r);
  }
  for (std::size_t j = 4; j < id.size(); ++j) {
    relief.push_back(Relief{0.02 * id[j], static_cast<int>(2 * (j - 3)), static_cast<int>(j - 2), 0.0});
  }

  const std::size_t m = resolution;
  TriMesh mesh;
  mesh.vertices.reserve((m + 1) * (m + 1));
  for (std::size_t j = 0; j <= m; ++j) {
    for (std::size_t i = 0; i <= m; ++i) {
      // Square grid -> disc; (2i - m)/m is exactly antisymmetric in i.
      const double u = (2.0 * static_cast<double>(i) - static_cast<double>(m)) / static_cast<double>(m);
      const double v = (2.0 * static_cast<double>(j) - static_cast<double>(m)) / static_cast<double>(m);
      const double s = u * std::sqrt(1.0 - 0.5 * v * v);
      const double t = v * std::sqrt(1.0 - 0.5 * u * u);  // t < 0 forehead, t > 0 chin
      const double r2 = std::min(1.0, s * s + t * t);

      double z = depth * std::sqrt(1.0 - r2);
      z += nose * gauss2(s, t - 0.02, 0.11, 0.28) + 0.45 * nose * gauss2(s, t - 0.2, 0.09, 0.09);
      z -= 0.09 * (gauss2(s - 0.36, t + 0.2, 0.13, 0.09) + gauss2(s + 0.36, t + 0.2, 0.13, 0.09));
      z += 0.04 * gauss2(s, t + 0.36, 0.5, 0.07);
      z -= (0.02 + 0.2 * expr) * gauss2(s, t - 0.5, 0.2 + 0.06 * expr, 0.04 + 0.07 * expr);
      const double rim = 1.0 - r2;
      for (const auto& r : relief) {
        z += rim * r.amplitude * std::cos(r.freq_s * std::numbers::pi * s) *
             std::cos(r.freq_t * std::numbers::pi * t + r.phase);
      }

      double y = height * t;
      if (t > 0.45) {
        const double k = (t - 0.45) / 0.55;
        y += 0.12 * expr * height * k * k;
      }
      mesh.vertices.push_back({width * s, y, z});
    }
  }

  auto vid = [m](std::size_t i, std::size_t j) { return static_cast<std::uint32_t>(j * (m + 1) + i); };
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      const auto v00 = vid(i, j), v10 = vid(i + 1, j), v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
      // Diagonals mirror across the vertical midline.
      if (i < m / 2) {
        mesh.triangles.push_back({v00, v10, v11});
        mesh.triangles.push_back({v00, v11, v01});
      } else {
        mesh.triangles.push_back({v00, v10, v01});
        mesh.triangles.push_back({v10, v11, v01});
      }
    }
  }
  std::erase_if(mesh.triangles, [&mesh](const auto& tri) {
    TriMesh one;
    one.vertices = {mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]};
    one.triangles = {{0, 1, 2}};
    return one.triangle_area(0) <= 1e-12;
  });

  double radius = 0.0;
  for (const auto& p : mesh.vertices) radius = std::max(radius, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));

  FaceSample out;
  out.mesh = std::move(mesh);
  const double size = static_cast<double>(view_size);
  out.projection.scale = kViewFill * size / (2.0 * radius);
  out.projection.rotation = pose_rotation(params.pose);
  out.projection.translation = {0.5 * size, 0.5 * size};
  return out;
}

}  // namespace facevox::geometry
