#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "facevox/geometry/geometry.hpp"

using namespace facevox::geometry;

namespace {

FaceParams neutral() {
  FaceParams p;
  p.identity = {0.1, -0.2, 0.3, 0.4};
  return p;
}

TriMesh single_triangle(Vec3 a, Vec3 b, Vec3 c) {
  TriMesh m;
  m.vertices = {a, b, c};
  m.triangles = {{0, 1, 2}};
  return m;
}

ProjectionParams unit_camera() { return ProjectionParams{}; }

}  // namespace

TEST_CASE("synth_face is deterministic and seed dependent") {
  const auto a = synth_face(7, neutral(), 32);
  const auto b = synth_face(7, neutral(), 32);
  CHECK(a.mesh.vertices == b.mesh.vertices);
  CHECK(a.mesh.triangles == b.mesh.triangles);

  const auto c = synth_face(8, neutral(), 32);
  REQUIRE(c.mesh.vertices.size() == a.mesh.vertices.size());
  double biggest = 0.0;
  for (std::size_t i = 0; i < a.mesh.vertices.size(); ++i)
    for (int k = 0; k < 3; ++k) biggest = std::max(biggest, std::abs(a.mesh.vertices[i][k] - c.mesh.vertices[i][k]));
  CHECK(biggest > 1e-6);
}

TEST_CASE("neutral frontal face is mirror symmetric") {
  const auto face = synth_face(3, neutral(), 32);
  std::vector<Vec3> verts = face.mesh.vertices;
  std::vector<Vec3> mirrored;
  for (const auto& v : verts) mirrored.push_back({-v[0], v[1], v[2]});
  auto order = [](const Vec3& p, const Vec3& q) {
    // Quantize so that ordering cannot hinge on last-bit noise.
    for (int k = 0; k < 3; ++k) {
      const double a = std::round(p[k] * 1e6), b = std::round(q[k] * 1e6);
      if (a != b) return a < b;
    }
    return false;
  };
  std::sort(verts.begin(), verts.end(), order);
  std::sort(mirrored.begin(), mirrored.end(), order);
  double worst = 0.0;
  for (std::size_t i = 0; i < verts.size(); ++i)
    for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(verts[i][k] - mirrored[i][k]));
  CHECK(worst < 1e-9);
}

TEST_CASE("synth_face validates its inputs and mesh invariants") {
  auto p = neutral();
  p.pose.yaw = 91.0;
  CHECK_THROWS_AS(synth_face(1, p, 32), std::invalid_argument);
  p = neutral();
  p.identity = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(synth_face(1, p, 32), std::invalid_argument);
  p = neutral();
  p.expression = 1.5;
  CHECK_THROWS_AS(synth_face(1, p, 32), std::invalid_argument);

  p = neutral();
  p.pose = {60.0, -30.0, 15.0};
  p.expression = 0.8;
  const auto face = synth_face(11, p, 32);
  face.mesh.validate();
  CHECK_NOTHROW(face.projection.validate());
  for (std::size_t t = 0; t < face.mesh.triangles.size(); ++t) CHECK(face.mesh.triangle_area(t) > 1e-12);

  // The face spans roughly 80% of the view and stays inside the frame.
  const auto frame = face_frame(32);
  double umin = 1e9, umax = -1e9;
  for (const auto& q : project(face.mesh, face.projection)) {
    umin = std::min(umin, q.u);
    umax = std::max(umax, q.u);
    CHECK(q.z < frame.z_near);
    CHECK(q.z > frame.z_far);
  }
  CHECK(umin >= 0.0);
  CHECK(umax <= 32.0);
}

TEST_CASE("pose_rotation composes yaw, pitch, roll") {
  const Mat3 r = pose_rotation({30.0, 20.0, 10.0});
  const Mat3 rt = r;
  double worst = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += rt[k][i] * r[k][j];
      worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  CHECK(worst < 1e-12);
  // Yaw alone rotates about the vertical (y) axis.
  const auto v = facevox::geometry::apply(pose_rotation({90.0, 0.0, 0.0}), Vec3{0.0, 1.0, 0.0});
  CHECK(std::abs(v[1] - 1.0) < 1e-12);
}

TEST_CASE("project worked examples") {
  TriMesh m;
  m.vertices = {{1.0, 2.0, 3.0}};
  ProjectionParams p;
  p.scale = 2.0;
  p.translation = {10.0, 20.0};
  auto q = project(m, p);
  CHECK(q[0].u == 12.0);
  CHECK(q[0].v == 24.0);
  CHECK(q[0].z == 6.0);

  p.scale = 0.0;
  CHECK_THROWS_AS(project(m, p), std::invalid_argument);

  // 90 degrees about the vertical axis, mapping x to -z.
  ProjectionParams turn;
  turn.rotation = {{{0.0, 0.0, 1.0}, {0.0, 1.0, 0.0}, {-1.0, 0.0, 0.0}}};
  m.vertices = {{1.0, 0.0, 0.0}};
  q = project(m, turn);
  CHECK(q[0].u == 0.0);
  CHECK(q[0].v == 0.0);
  CHECK(q[0].z == -1.0);

  ProjectionParams skew;
  skew.rotation = {{{1.0, 0.1, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
  CHECK_THROWS_AS(project(m, skew), std::invalid_argument);
}

TEST_CASE("project is linear in the scale factor") {
  const auto face = synth_face(5, neutral(), 32);
  ProjectionParams p = face.projection;
  ProjectionParams p2 = p;
  p2.scale *= 2.0;
  const auto a = project(face.mesh, p), b = project(face.mesh, p2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs((b[i].u - p.translation[0]) - 2.0 * (a[i].u - p.translation[0])) < 1e-9);
    CHECK(std::abs((b[i].v - p.translation[1]) - 2.0 * (a[i].v - p.translation[1])) < 1e-9);
  }
}

TEST_CASE("render_depth basics") {
  const ViewFrame frame{8, 1.0, -1.0};
  CHECK(render_depth(TriMesh{}, unit_camera(), frame).foreground_count() == 0);

  // Two overlapping triangles; the nearer one wins regardless of order.
  TriMesh m;
  m.vertices = {{0, 0, 0.3}, {8, 0, 0.3}, {0, 8, 0.3}, {0, 0, 0.7}, {8, 0, 0.7}, {0, 8, 0.7}};
  m.triangles = {{0, 1, 2}, {3, 4, 5}};
  auto d = render_depth(m, unit_camera(), frame);
  CHECK(d.at(1, 1) == doctest::Approx(frame.normalize(0.7)).epsilon(1e-15));
  m.triangles = {{3, 4, 5}, {0, 1, 2}};
  CHECK(render_depth(m, unit_camera(), frame).at(1, 1) == d.at(1, 1));

  // Nearest plane maps to 1.
  d = render_depth(single_triangle({0, 0, 1}, {8, 0, 1}, {0, 8, 1}), unit_camera(), frame);
  CHECK(d.at(2, 2) == 1.0);

  // Off-screen mesh renders as background.
  d = render_depth(single_triangle({100, 100, 0}, {108, 100, 0}, {100, 108, 0}), unit_camera(), frame);
  CHECK(d.foreground_count() == 0);

  CHECK_THROWS_AS(render_depth(m, unit_camera(), ViewFrame{4, 1.0, -1.0}), std::invalid_argument);
}

TEST_CASE("render_depth matches a plane equation oracle") {
  // z = 0.02 u - 0.03 v + 0.1 over a triangle covering most of the view.
  auto plane = [](double u, double v) { return 0.02 * u - 0.03 * v + 0.1; };
  const Vec3 a{0.2, 0.3, plane(0.2, 0.3)}, b{15.7, 1.1, plane(15.7, 1.1)}, c{2.4, 15.9, plane(2.4, 15.9)};
  const ViewFrame frame{16, 1.0, -1.0};
  const auto d = render_depth(single_triangle(a, b, c), unit_camera(), frame);
  std::size_t checked = 0;
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) {
      if (d.at(x, y) == 0.0) continue;
      const double expect = frame.normalize(plane(x + 0.5, y + 0.5));
      CHECK(std::abs(d.at(x, y) - expect) < 1e-6);
      ++checked;
    }
  CHECK(checked > 50);
}

TEST_CASE("top-left rule shades a shared edge exactly once") {
  // A square split along its diagonal, with pixel centres on the diagonal.
  TriMesh m;
  m.vertices = {{1, 1, 0}, {7, 1, 0}, {7, 7, 0}, {1, 7, 0}};
  const ViewFrame frame{8, 1.0, -1.0};
  m.triangles = {{0, 1, 2}};
  const auto lower = render_depth(m, unit_camera(), frame);
  m.triangles = {{0, 2, 3}};
  const auto upper = render_depth(m, unit_camera(), frame);
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  const auto both = render_depth(m, unit_camera(), frame);
  for (std::size_t i = 0; i < both.values.size(); ++i) {
    const int covered = (lower.values[i] > 0.0) + (upper.values[i] > 0.0);
    CHECK(covered <= 1);
    CHECK((both.values[i] > 0.0) == (covered == 1));
  }
  CHECK(both.foreground_count() == 36);
}

TEST_CASE("rendered faces keep values in the valid range") {
  auto p = neutral();
  p.pose = {-45.0, 10.0, 5.0};
  const auto face = synth_face(21, p, 32);
  const auto d = render_depth(face.mesh, face.projection, face_frame(32));
  CHECK(d.foreground_count() > 200);
  for (double v : d.values) CHECK((v == 0.0 || (v > 0.0 && v <= 1.0)));
}

TEST_CASE("triangle_box_overlap separating axes") {
  const Vec3 c{0.5, 0.5, 0.5}, h{0.5, 0.5, 0.5};
  CHECK(triangle_box_overlap(c, h, {0.2, 0.2, 0.5}, {0.8, 0.2, 0.5}, {0.5, 0.8, 0.5}));
  CHECK_FALSE(triangle_box_overlap(c, h, {2, 0, 0}, {3, 0, 0}, {2, 1, 0}));
  // Plane passes beside the box corner.
  CHECK_FALSE(triangle_box_overlap(c, h, {3.2, 0, 0}, {0, 3.2, 0}, {0, 0, 3.2}));
  CHECK(triangle_box_overlap(c, h, {2.8, 0, 0}, {0, 2.8, 0}, {0, 0, 2.8}));
  // Only an edge cross-axis separates this one: the bounding boxes overlap
  // and the triangle plane cuts the box.
  CHECK_FALSE(triangle_box_overlap(c, h, {1.3, 0.9, 0.5}, {0.9, 1.3, 0.5}, {2.0, 2.0, -3.0}));
  // Touching a face counts.
  CHECK(triangle_box_overlap(c, h, {1.0, 0.2, 0.2}, {2.0, 0.2, 0.2}, {1.0, 0.8, 0.8}));
}

TEST_CASE("voxelize a quad at a layer centre") {
  // Depth range [-1, 1] so z = -0.125 normalizes to 3.5/8.
  const ViewFrame frame{8, 1.0, -1.0};
  TriMesh quad;
  const double z = -1.0 + 2.0 * 3.5 / 8.0;
  quad.vertices = {{0, 0, z}, {8, 0, z}, {8, 8, z}, {0, 8, z}};
  quad.triangles = {{0, 1, 2}, {0, 2, 3}};
  const auto g = voxelize(quad, unit_camera(), frame, 8);
  CHECK(g.count_above(0.5) == 64);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) CHECK(g.at(x, y, 3) == 1.0);
  CHECK(g.is_binary());

  CHECK(voxelize(TriMesh{}, unit_camera(), frame, 8).count_above(0.5) == 0);
  CHECK_THROWS_AS(voxelize(quad, unit_camera(), frame, 4), std::invalid_argument);
}

TEST_CASE("voxelize is reflection invariant and monotone in resolution") {
  auto p = neutral();
  p.pose = {25.0, -10.0, 0.0};
  p.expression = 0.4;
  const auto face = synth_face(9, p, 32);
  const auto frame = face_frame(32);

  // Reflect through the vertical midplane of the view cube: u -> 32 - u.
  ProjectionParams mirror = face.projection;
  mirror.translation[0] = 32.0 - mirror.translation[0];
  TriMesh flipped = face.mesh;
  // Reflect model x and fold the reflection into the rotation so it stays
  // proper: M R M with M = diag(-1,1,1) maps x' = -x in camera space.
  for (auto& v : flipped.vertices) v[0] = -v[0];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if ((i == 0) != (j == 0)) mirror.rotation[i][j] = -mirror.rotation[i][j];
  const auto g = voxelize(face.mesh, face.projection, frame, 32);
  const auto gm = voxelize(flipped, mirror, frame, 32);
  CHECK(g.count_above(0.5) > 100);
  CHECK(g.count_above(0.5) == gm.count_above(0.5));
  // The reflection is exact on the grid when the midplane is a voxel face.
  for (std::size_t z = 0; z < 32; ++z)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) REQUIRE(g.at(x, y, z) == gm.at(31 - x, y, z));

  const auto fine = voxelize(face.mesh, face.projection, frame, 64);
  for (std::size_t z = 0; z < 32; ++z)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        if (g.at(x, y, z) != 1.0) continue;
        bool child = false;
        for (int c = 0; c < 8; ++c)
          child = child || fine.at(2 * x + (c & 1), 2 * y + ((c >> 1) & 1), 2 * z + ((c >> 2) & 1)) == 1.0;
        REQUIRE(child);
      }
}

TEST_CASE("depth_from_grid") {
  VoxelGrid g(8);
  CHECK(depth_from_grid(g, 0.5).foreground_count() == 0);
  g.at(2, 5, 6) = 1.0;
  const auto d = depth_from_grid(g, 0.5);
  CHECK(d.foreground_count() == 1);
  CHECK(d.at(2, 5) == 6.5 / 8.0);
  g.at(2, 5, 1) = 1.0;
  CHECK(depth_from_grid(g, 0.5).at(2, 5) == 6.5 / 8.0);
  CHECK_THROWS_AS(depth_from_grid(g, 1.0), std::invalid_argument);
}

TEST_CASE("add_noise statistics and invariants") {
  DepthView d(128, 128);
  for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] = i % 7 == 0 ? 0.0 : 0.5;
  CHECK(add_noise(d, 0.0, 1).values == d.values);
  const auto n = add_noise(d, 0.05, 2);
  CHECK(n.foreground_count() == d.foreground_count());
  double s = 0.0, s2 = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (d.values[i] == 0.0) {
      CHECK(n.values[i] == 0.0);
      continue;
    }
    const double e = n.values[i] - d.values[i];
    s += e;
    s2 += e * e;
    ++count;
  }
  REQUIRE(count >= 10000);
  const double mean = s / static_cast<double>(count);
  const double sd = std::sqrt(s2 / static_cast<double>(count) - mean * mean);
  CHECK(std::abs(sd - 0.05) < 0.05 * 0.05);
  CHECK(add_noise(d, 0.05, 2).values == n.values);
  CHECK(add_noise(d, 0.05, 3).values != n.values);
  CHECK_THROWS_AS(add_noise(d, -1.0, 1), std::invalid_argument);

  // Saturated values stay inside (0, 1].
  DepthView edge(4, 4);
  for (auto& v : edge.values) v = 1e-3;
  for (double v : add_noise(edge, 0.5, 4).values) CHECK((v > 0.0 && v <= 1.0));
}

TEST_CASE("punch_holes") {
  DepthView d(16, 16);
  for (auto& v : d.values) v = 0.6;
  CHECK(punch_holes(d, 0, 2.0, 1).values == d.values);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto h = punch_holes(d, 1, 2.0, seed);
    const auto zeroed = d.values.size() - h.foreground_count();
    CHECK(zeroed >= 9);
    CHECK(zeroed <= 13);
    for (double v : h.values) CHECK((v == 0.0 || v == 0.6));
  }
  CHECK(punch_holes(d, 3, 2.0, 5).values == punch_holes(d, 3, 2.0, 5).values);
}
