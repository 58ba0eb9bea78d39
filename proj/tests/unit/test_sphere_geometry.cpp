#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "amrlab/sphere_geometry.hpp"
#include "amrlab/tree_mesh.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace amrlab;

namespace {
constexpr double kPi = std::numbers::pi;

std::array<double, 3> arr(const Vec3& v) { return {v.x, v.y, v.z}; }

Vec3 from_lonlat(double lon, double lat, double r) {
  return {r * std::cos(lat) * std::cos(lon), r * std::cos(lat) * std::sin(lon), r * std::sin(lat)};
}
}  // namespace

TEST_CASE("cubed sphere: n=1 has cube combinatorics") {
  const CubedSphereMesh m = build_cubed_sphere(1, 1.0);
  CHECK(m.num_elements() == 6);
  CHECK(m.num_faces() == 12);
  CHECK(m.num_vertices() == 8);
}

TEST_CASE("cubed sphere: Euler characteristic is 2 for any n") {
  for (int n = 1; n <= 6; ++n) {
    const CubedSphereMesh m = build_cubed_sphere(n, 1.0);
    CHECK(long(m.num_vertices()) - long(m.num_faces()) + long(m.num_elements()) == 2);
  }
}

TEST_CASE("cubed sphere: total area is 4 pi r^2") {
  for (int n : {1, 2, 3, 7, 16}) {
    const double r = 6371000.0;
    const CubedSphereMesh m = build_cubed_sphere(n, r);
    const double exact = 4.0 * kPi * r * r;
    CHECK(std::abs(m.total_area() - exact) / exact < 1e-12);
  }
}

TEST_CASE("cubed sphere: 30x30 tiles give 5400 elements") {
  CHECK(build_cubed_sphere(30, 1.0).num_elements() == 5400);
}

TEST_CASE("cubed sphere: n < 1 is rejected") {
  CHECK_THROWS_AS(build_cubed_sphere(0, 1.0), std::invalid_argument);
}

TEST_CASE("cubed sphere: nodes lie on the sphere") {
  const double r = 2.5;
  for (int tile = 0; tile < 6; ++tile)
    for (double s : {0.0, 0.2, 0.5, 0.77, 1.0})
      for (double t : {0.0, 0.3, 1.0}) CHECK(std::abs(norm(gnomonic_point(tile, s, t, r)) - r) < 1e-14);
}

TEST_CASE("spherical triangle: octant has area pi/2 r^2") {
  const double r = 3.0;
  const double a = spherical_triangle_area({r, 0, 0}, {0, r, 0}, {0, 0, r}, r);
  CHECK(std::abs(a - 0.5 * kPi * r * r) < 1e-12);
}

TEST_CASE("spherical triangle: tiny triangle approaches the planar area") {
  const Vec3 p1 = from_lonlat(0.3, 0.4, 1.0);
  const Vec3 p2 = from_lonlat(0.3 + 1e-3, 0.4, 1.0);
  const Vec3 p3 = from_lonlat(0.3, 0.4 + 1e-3, 1.0);
  const double flat = oracle::flat_triangle_area(arr(p1), arr(p2), arr(p3));
  const double curved = spherical_triangle_area(p1, p2, p3, 1.0);
  CHECK(std::abs(curved - flat) / flat < 1e-2);
}

TEST_CASE("spherical triangle: degenerate input is rejected") {
  const Vec3 p{1, 0, 0};
  CHECK_THROWS_AS(spherical_triangle_area(p, p, {0, 1, 0}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(spherical_triangle_area(p, {-1, 0, 0}, {0, 1, 0}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(spherical_triangle_area(p, from_lonlat(0.1, 0, 1), from_lonlat(0.2, 0, 1), 1.0),
                  std::invalid_argument);
}

TEST_CASE("spherical quad: area does not depend on the diagonal") {
  const CubedSphereMesh m = build_cubed_sphere(5, 1.0);
  for (const auto& c : m.corners) {
    const double a0 = spherical_quad_area_split(c, 1.0, 0);
    const double a1 = spherical_quad_area_split(c, 1.0, 1);
    CHECK(std::abs(a0 - a1) < 1e-12 * a0);
    CHECK(std::abs(spherical_quad_area(c, 1.0) - a0) < 1e-12 * a0);
  }
}

TEST_CASE("geodesic distance: trivial cases") {
  const double r = 10.0;
  CHECK(geodesic_distance(0.4, 0.2, 0.4, 0.2, r) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(geodesic_distance(0.0, 0.0, kPi, 0.0, r) - kPi * r) < 1e-12);
  CHECK(std::abs(geodesic_distance(0.0, 0.5, kPi, -0.5, r) - kPi * r) < 1e-9);
  CHECK(std::abs(geodesic_distance(0.0, 0.0, 0.5 * kPi, 0.0, r) - 0.5 * kPi * r) < 1e-12);
}

TEST_CASE("geodesic distance property: chord-angle oracle and range") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> lon(-kPi, kPi), lat(-0.5 * kPi, 0.5 * kPi);
  for (int k = 0; k < 500; ++k) {
    const double l1 = lon(rng), f1 = lat(rng), l2 = lon(rng), f2 = lat(rng);
    const Vec3 a = from_lonlat(l1, f1, 1.0), b = from_lonlat(l2, f2, 1.0);
    const double ref = 2.0 * std::asin(std::min(1.0, 0.5 * norm(a - b)));
    const double d = geodesic_distance(l1, f1, l2, f2, 1.0);
    CHECK(d >= 0.0);
    CHECK(d <= kPi);
    CHECK(std::abs(d - ref) < 1e-7);
  }
}

TEST_CASE("pseudo-inverse: orthonormal columns give the transpose") {
  const auto p = pseudo_inverse_jacobian({1, 0, 0}, {0, 1, 0});
  CHECK(std::abs(p[0].x - 1) < 1e-15);
  CHECK(std::abs(p[0].y) < 1e-15);
  CHECK(std::abs(p[1].y - 1) < 1e-15);
  CHECK(std::abs(p[1].x) < 1e-15);
}

TEST_CASE("pseudo-inverse: scaling columns by 2 halves the result") {
  const Vec3 a{0.3, -1.2, 0.5}, b{0.9, 0.1, -0.4};
  const auto p = pseudo_inverse_jacobian(a, b);
  const auto q = pseudo_inverse_jacobian(a * 2.0, b * 2.0);
  for (int k = 0; k < 2; ++k) CHECK(norm(q[k] - p[k] * 0.5) < 1e-14);
}

TEST_CASE("pseudo-inverse property: J+ J = I on random tangent columns") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const Vec3 a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)};
    if (norm(cross(a, b)) < 0.2 * norm(a) * norm(b)) continue;
    const auto p = pseudo_inverse_jacobian(a, b);
    CHECK(std::abs(dot(p[0], a) - 1.0) < 1e-12);
    CHECK(std::abs(dot(p[0], b)) < 1e-12);
    CHECK(std::abs(dot(p[1], a)) < 1e-12);
    CHECK(std::abs(dot(p[1], b) - 1.0) < 1e-12);
  }
}

TEST_CASE("pseudo-inverse: dependent columns are rejected") {
  CHECK_THROWS_AS(pseudo_inverse_jacobian({1, 2, 3}, {2, 4, 6}), std::invalid_argument);
}

TEST_CASE("volume loss: spherical-excess children tile their parent") {
  const double r = 6371000.0;
  QuadForest f(ForestTopology::cubed_sphere(4), 3);
  const SphereMapping map(r);
  auto total = [&] {
    double a = 0.0;
    for (const CellKey& k : f.leaves()) a += cell_area(f.topology(), map, k);
    return a;
  };
  const double before = total();
  CHECK(volume_loss_metric(before, before) == 0.0);
  const CellKey c{2, 0, 1, 3};
  f.refine(std::span(&c, 1));
  CHECK(volume_loss_metric(before, total()) < 1e-13);
  std::mt19937 rng(17);
  for (int round = 0; round < 3; ++round) {
    std::vector<CellKey> pick;
    for (const CellKey& k : f.leaves())
      if (rng() % 7 == 0) pick.push_back(k);
    f.refine(pick);
    CHECK(volume_loss_metric(before, total()) < 1e-13);
  }
}

TEST_CASE("volume loss: chordal child areas report a strictly positive gain") {
  const double r = 1.0;
  const CubedSphereMesh coarse = build_cubed_sphere(3, r);
  const CubedSphereMesh fine = build_cubed_sphere(6, r);
  double a0 = 0.0, a1 = 0.0;
  for (const auto& c : coarse.corners) a0 += chordal_quad_area(c);
  for (const auto& c : fine.corners) a1 += chordal_quad_area(c);
  CHECK(a1 > a0);
  CHECK(volume_loss_metric(a0, a1) > 1e-3);
}

TEST_CASE("tile connectivity: crossing a tile edge twice returns to the start") {
  const CubedSphereMesh m = build_cubed_sphere(2, 1.0);
  REQUIRE(m.neighbors.size() == 6);
  for (int t = 0; t < 6; ++t)
    for (int s = 0; s < 4; ++s) {
      const TileNeighbor& n = m.neighbors[t][s];
      REQUIRE(n.valid());
      const TileNeighbor& back = m.neighbors[n.tile][n.side];
      CHECK(back.tile == t);
      CHECK(back.side == s);
      CHECK(back.reversed == n.reversed);
    }
}

TEST_CASE("cell crossing property: involution on every boundary cell of every tile") {
  const ForestTopology topo = ForestTopology::cubed_sphere(3);
  for (int level = 0; level <= 2; ++level)
    for (int t = 0; t < 6; ++t)
      for (int j = 0; j < topo.cells_y(level); ++j)
        for (int i = 0; i < topo.cells_x(level); ++i)
          for (int side = 0; side < 4; ++side) {
            const CellKey k{t, level, i, j};
            const auto c = topo.cross(k, side);
            REQUIRE(c.valid);
            const auto back = topo.cross(c.cell, c.side);
            REQUIRE(back.valid);
            CHECK(back.cell == k);
            CHECK(back.side == side);
          }
}

TEST_CASE("cubed sphere: every shared edge joins matching corner points") {
  const CubedSphereMesh m = build_cubed_sphere(1, 1.0);
  // Side k runs between corners (W: 0-3, E: 1-2, S: 0-1, N: 3-2).
  const int ends[4][2] = {{0, 3}, {1, 2}, {0, 1}, {3, 2}};
  for (int t = 0; t < 6; ++t)
    for (int s = 0; s < 4; ++s) {
      const TileNeighbor& n = m.neighbors[t][s];
      Vec3 a0 = m.corners[t][ends[s][0]], a1 = m.corners[t][ends[s][1]];
      Vec3 b0 = m.corners[n.tile][ends[n.side][0]], b1 = m.corners[n.tile][ends[n.side][1]];
      if (n.reversed) std::swap(b0, b1);
      CHECK(norm(a0 - b0) < 1e-14);
      CHECK(norm(a1 - b1) < 1e-14);
    }
}
