#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "facevox/evaluation/evaluation.hpp"
#include "facevox/io/formats.hpp"

using namespace facevox;
using namespace facevox::evaluation;
using geometry::TriMesh;
using geometry::Vec3;
using geometry::VoxelGrid;

namespace {

VoxelGrid random_grid(std::size_t n, std::uint64_t seed, bool binary, double p = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VoxelGrid g(n);
  for (auto& v : g.values) v = binary ? (u(rng) < p ? 1.0 : 0.0) : u(rng);
  return g;
}

double dist(const Vec3& a, const Vec3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

double hausdorff_oracle(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  auto directed = [](const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
    double worst = 0.0;
    for (const auto& x : p) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& y : q) best = std::min(best, dist(x, y));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

std::vector<Vec3> random_points(std::mt19937_64& rng, std::size_t count) {
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::vector<Vec3> out(count);
  for (auto& p : out) p = {u(rng), u(rng), u(rng)};
  return out;
}

double iou_oracle(const VoxelGrid& y, const VoxelGrid& t) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < y.values.size(); ++i) {
    const bool a = y.values[i] > 0.5, b = t.values[i] > 0.5;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double ce_oracle(const VoxelGrid& y, const VoxelGrid& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.values.size(); ++i) {
    const double c = std::min(std::max(y.values[i], 1e-7), 1.0 - 1e-7);
    s += t.values[i] * std::log(c) + (1.0 - t.values[i]) * std::log(1.0 - c);
  }
  return -s / static_cast<double>(y.values.size());
}

// Euler characteristic plus the closed-and-oriented property: every directed
// edge appears exactly once and its reverse exactly once.
int euler_characteristic(const TriMesh& m, bool& closed) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const auto& t : m.triangles)
    for (int k = 0; k < 3; ++k) ++directed[{t[k], t[(k + 1) % 3]}];
  std::set<std::pair<std::uint32_t, std::uint32_t>> undirected;
  closed = true;
  for (const auto& [e, count] : directed) {
    undirected.insert({std::min(e.first, e.second), std::max(e.first, e.second)});
    if (count != 1 || !directed.count({e.second, e.first})) closed = false;
  }
  return static_cast<int>(m.vertices.size()) - static_cast<int>(undirected.size()) + static_cast<int>(m.triangles.size());
}

}  // namespace

TEST_CASE("iou examples and oracle") {
  VoxelGrid a(2), b(2);
  a.values[0] = 0.6;
  a.values[1] = 0.7;
  b.values[1] = 1.0;
  b.values[2] = 1.0;
  CHECK(iou(a, b) == 1.0 / 3.0);
  CHECK(iou(b, b) == 1.0);
  VoxelGrid c(2);
  c.values[5] = 1.0;
  CHECK(iou(c, b) == 0.0);
  CHECK(iou(VoxelGrid(2), VoxelGrid(2)) == 1.0);
  VoxelGrid edge(2);
  edge.values[2] = 0.5;
  CHECK(iou(edge, b) == 0.0);
  CHECK_THROWS_AS(iou(a, VoxelGrid(3)), std::invalid_argument);
  CHECK_THROWS_AS(iou(a, b, 1.0), std::invalid_argument);

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto y = random_grid(8, seed, false), t = random_grid(8, 500 + seed, true);
    const double v = iou(y, t);
    CHECK(std::abs(v - iou_oracle(y, t)) < 1e-9);
    CHECK((v >= 0.0 && v <= 1.0));
    const auto yb = random_grid(8, 900 + seed, true);
    CHECK(iou(yb, t) == iou(t, yb));
  }
}

TEST_CASE("cross-entropy examples and oracle") {
  VoxelGrid one(1);
  one.values[0] = 1.0;
  VoxelGrid half(1);
  half.values[0] = 0.5;
  CHECK(ce_metric(half, one) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  VoxelGrid y(2), t(2);
  y.values = std::vector<double>(8, 0.1);
  y.values[0] = 0.9;
  t.values[0] = 1.0;
  CHECK(std::abs(ce_metric(y, t) + std::log(0.9)) < 1e-12);
  CHECK(std::abs(ce_metric(y, t) - 0.105361) < 5e-7);
  CHECK(ce_metric(t, t) < 1.1e-7);

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = random_grid(8, seed, false), g = random_grid(8, 300 + seed, true);
    const double v = ce_metric(p, g);
    CHECK(std::abs(v - ce_oracle(p, g)) < 1e-9);
    CHECK(v >= 0.0);
    CHECK(v >= ce_metric(g, g));
  }
}

TEST_CASE("point-set hausdorff") {
  const std::vector<Vec3> origin{{0, 0, 0}}, three{{3, 0, 0}}, pair{{0, 0, 0}, {1, 0, 0}};
  CHECK(hausdorff(origin, origin) == 0.0);
  CHECK(hausdorff(origin, three) == 3.0);
  CHECK(hausdorff(pair, origin) == 1.0);
  CHECK_THROWS_AS(hausdorff(origin, std::vector<Vec3>{}), std::invalid_argument);

  std::mt19937_64 rng(41);
  std::uniform_int_distribution<std::size_t> size(1, 20);
  for (int i = 0; i < 50; ++i) {
    const auto a = random_points(rng, size(rng)), b = random_points(rng, size(rng)), c = random_points(rng, size(rng));
    const double ab = hausdorff(a, b);
    CHECK(ab == hausdorff_oracle(a, b));
    CHECK(ab == hausdorff(b, a));
    CHECK(hausdorff(a, c) <= ab + hausdorff(b, c) + 1e-12);
  }
}

TEST_CASE("grid hausdorff and distance field") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = random_grid(6, seed, true, 0.1), b = random_grid(6, 50 + seed, true, 0.1);
    const auto pa = occupied_centers(a, 0.5), pb = occupied_centers(b, 0.5);
    if (pa.empty() || pb.empty()) continue;
    CHECK(std::abs(hausdorff(a, b) - hausdorff_oracle(pa, pb)) < 1e-12);

    const auto field = per_point_distance_field(a, b);
    REQUIRE(field.size() == pa.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : pb) best = std::min(best, dist(pa[i], q));
      CHECK(std::abs(field[i] - best) < 1e-12);
    }
  }

  VoxelGrid g(4), h(4);
  g.at(1, 1, 1) = 1.0;
  h.at(1, 1, 2) = 1.0;
  CHECK(per_point_distance_field(g, h) == std::vector<double>{1.0});
  for (double d : per_point_distance_field(h, h)) CHECK(d == 0.0);
  CHECK_THROWS_AS(per_point_distance_field(g, VoxelGrid(4)), std::invalid_argument);
}

TEST_CASE("surface extraction") {
  CHECK(extract_surface(VoxelGrid(3)).empty());

  VoxelGrid one(3);
  one.at(1, 1, 1) = 0.9;
  const auto cube = extract_surface(one);
  CHECK(cube.triangles.size() == 12);
  CHECK(cube.vertices.size() == 8);
  bool closed = false;
  CHECK(euler_characteristic(cube, closed) == 2);
  CHECK(closed);
  for (std::size_t t = 0; t < cube.triangles.size(); ++t) {
    const auto& tri = cube.triangles[t];
    const auto &p0 = cube.vertices[tri[0]], &p1 = cube.vertices[tri[1]], &p2 = cube.vertices[tri[2]];
    const Vec3 u{p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]}, v{p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]};
    const Vec3 n{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
    const Vec3 out{(p0[0] + p1[0] + p2[0]) / 3 - 1.5, (p0[1] + p1[1] + p2[1]) / 3 - 1.5, (p0[2] + p1[2] + p2[2]) / 3 - 1.5};
    CHECK(n[0] * out[0] + n[1] * out[1] + n[2] * out[2] > 0.0);
  }

  VoxelGrid two = one;
  two.at(2, 1, 1) = 1.0;
  const auto pair = extract_surface(two);
  CHECK(pair.triangles.size() == 20);
  CHECK(pair.vertices.size() == 12);
  CHECK(euler_characteristic(pair, closed) == 2);
  CHECK(closed);

  VoxelGrid block(4);
  for (std::size_t z = 1; z < 3; ++z)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 2; ++x) block.at(x, y, z) = 1.0;
  CHECK(euler_characteristic(extract_surface(block), closed) == 2);
  CHECK(closed);

  const auto with = extract_surface_with_distance(two, one);
  CHECK(with.mesh.vertices == pair.vertices);
  REQUIRE(with.vertex_distance.size() == pair.vertices.size());
  CHECK(std::count(with.vertex_distance.begin(), with.vertex_distance.end(), 0.0) == 8);
  CHECK(std::count(with.vertex_distance.begin(), with.vertex_distance.end(), 1.0) == 4);
}

TEST_CASE("metric report") {
  MetricReport r;
  r.add("s0", 0.25, 0.5);
  r.add("s1", 0.75, 0.25);
  CHECK(r.mean_iou() == 0.5);
  CHECK(r.mean_ce() == 0.375);
  const auto text = encode_report(r);
  CHECK(text.rfind("MEAN\t", text.size() - 1) != std::string::npos);
  const auto back = decode_report(text);
  CHECK(back.ids == r.ids);
  CHECK(back.iou == r.iou);
  CHECK(back.ce == r.ce);
  CHECK_THROWS(decode_report("s0\t0.5\n"));
}
