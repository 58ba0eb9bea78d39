#include "amrlab/sphere_geometry.hpp"

#include <algorithm>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>
#include <tuple>

namespace amrlab {

Vec3 cube_direction(int tile, double a, double b) {
  switch (tile) {
    case 0: return {1.0, a, b};
    case 1: return {-a, 1.0, b};
    case 2: return {-1.0, -a, b};
    case 3: return {a, -1.0, b};
    case 4: return {-b, a, 1.0};
    case 5: return {b, a, -1.0};
    default: throw std::invalid_argument("cube_direction: tile out of range");
  }
}

Vec3 gnomonic_point(int tile, double s, double t, double radius) {
  const double quarter = 0.5 * std::numbers::pi;
  const double alpha = (s - 0.5) * quarter;
  const double beta = (t - 0.5) * quarter;
  return normalized(cube_direction(tile, std::tan(alpha), std::tan(beta))) * radius;
}

namespace {

// Endpoints (along-parameter 0 and 1) of a tile side on the unit cube.
std::array<Vec3, 2> side_endpoints(int tile, int side) {
  auto at = [tile](double s, double t) {
    return cube_direction(tile, 2.0 * s - 1.0, 2.0 * t - 1.0);
  };
  switch (side) {
    case 0: return {at(0, 0), at(0, 1)};
    case 1: return {at(1, 0), at(1, 1)};
    case 2: return {at(0, 0), at(1, 0)};
    default: return {at(0, 1), at(1, 1)};
  }
}

bool same_point(const Vec3& a, const Vec3& b) { return norm(a - b) < 1e-12; }

}  // namespace

TileNeighborTable cubed_sphere_tile_neighbors() {
  TileNeighborTable table(6);
  for (int t = 0; t < 6; ++t)
    for (int s = 0; s < 4; ++s) {
      const auto e = side_endpoints(t, s);
      for (int t2 = 0; t2 < 6 && !table[t][s].valid(); ++t2) {
        if (t2 == t) continue;
        for (int s2 = 0; s2 < 4; ++s2) {
          const auto f = side_endpoints(t2, s2);
          if (same_point(e[0], f[0]) && same_point(e[1], f[1])) {
            table[t][s] = {t2, s2, false};
            break;
          }
          if (same_point(e[0], f[1]) && same_point(e[1], f[0])) {
            table[t][s] = {t2, s2, true};
            break;
          }
        }
      }
      if (!table[t][s].valid()) throw std::logic_error("cubed sphere: unmatched tile edge");
    }
  return table;
}

LatLon to_latlon(const Vec3& p) {
  const double r = norm(p);
  LatLon ll;
  ll.lat = std::asin(std::clamp(p.z / r, -1.0, 1.0));
  ll.lon = std::atan2(p.y, p.x);
  if (ll.lon >= std::numbers::pi) ll.lon -= 2.0 * std::numbers::pi;
  return ll;
}

Vec3 from_latlon(double lon, double lat, double radius) {
  return {radius * std::cos(lat) * std::cos(lon), radius * std::cos(lat) * std::sin(lon),
          radius * std::sin(lat)};
}

Vec3 east_vector(double lon, double /*lat*/) { return {-std::sin(lon), std::cos(lon), 0.0}; }

Vec3 north_vector(double lon, double lat) {
  return {-std::sin(lat) * std::cos(lon), -std::sin(lat) * std::sin(lon), std::cos(lat)};
}

double spherical_triangle_area(const Vec3& p1, const Vec3& p2, const Vec3& p3, double radius) {
  const Vec3 a = normalized(p1), b = normalized(p2), c = normalized(p3);
  const double tiny = 1e-14;
  if (norm(a - b) < tiny || norm(b - c) < tiny || norm(c - a) < tiny)
    throw std::invalid_argument("spherical_triangle_area: coincident vertices");
  if (norm(a + b) < tiny || norm(b + c) < tiny || norm(c + a) < tiny)
    throw std::invalid_argument("spherical_triangle_area: antipodal vertices");
  if (std::abs(dot(a, cross(b, c))) < 1e-15 * norm(a - b) * norm(b - c) * norm(c - a))
    throw std::invalid_argument("spherical_triangle_area: degenerate triangle");
  // Same excess as angle sum - pi, without the cancellation for small triangles.
  const double excess =
      2.0 * std::atan2(std::abs(dot(a, cross(b, c))), 1.0 + dot(a, b) + dot(b, c) + dot(c, a));
  return radius * radius * excess;
}

double spherical_quad_area_split(const std::array<Vec3, 4>& c, double radius, int diagonal) {
  if (diagonal == 0)
    return spherical_triangle_area(c[0], c[1], c[2], radius) +
           spherical_triangle_area(c[0], c[2], c[3], radius);
  return spherical_triangle_area(c[1], c[2], c[3], radius) +
         spherical_triangle_area(c[1], c[3], c[0], radius);
}

double spherical_quad_area(const std::array<Vec3, 4>& c, double radius) {
  int best = 0;
  for (int k = 1; k < 4; ++k)
    if (std::tie(c[k].x, c[k].y, c[k].z) < std::tie(c[best].x, c[best].y, c[best].z)) best = k;
  return spherical_quad_area_split(c, radius, best % 2);
}

double chordal_quad_area(const std::array<Vec3, 4>& c) {
  return 0.5 * norm(cross(c[1] - c[0], c[2] - c[0])) +
         0.5 * norm(cross(c[2] - c[0], c[3] - c[0]));
}

double geodesic_distance(double lon1, double lat1, double lon2, double lat2, double radius) {
  const double cosd =
      std::sin(lat1) * std::sin(lat2) + std::cos(lat1) * std::cos(lat2) * std::cos(lon2 - lon1);
  return radius * std::acos(std::clamp(cosd, -1.0, 1.0));
}

std::array<Vec3, 2> pseudo_inverse_jacobian(const Vec3& a1, const Vec3& a2) {
  const double g11 = dot(a1, a1), g12 = dot(a1, a2), g22 = dot(a2, a2);
  const double det = g11 * g22 - g12 * g12;
  if (!(det > 1e-24 * g11 * g22))
    throw std::invalid_argument("pseudo_inverse_jacobian: rank-deficient tangent columns");
  const double i11 = g22 / det, i12 = -g12 / det, i22 = g11 / det;
  return {a1 * i11 + a2 * i12, a1 * i12 + a2 * i22};
}

namespace {

using PointKey = std::tuple<long long, long long, long long>;

PointKey key_of(const Vec3& p, double radius) {
  const double scale = 1e9 / radius;
  return {std::llround(p.x * scale), std::llround(p.y * scale), std::llround(p.z * scale)};
}

}  // namespace

std::size_t CubedSphereMesh::num_vertices() const {
  std::set<PointKey> keys;
  for (const auto& q : corners)
    for (const auto& p : q) keys.insert(key_of(p, radius));
  return keys.size();
}

std::size_t CubedSphereMesh::num_faces() const {
  std::set<std::pair<PointKey, PointKey>> edges;
  for (const auto& q : corners)
    for (int k = 0; k < 4; ++k) {
      auto a = key_of(q[k], radius), b = key_of(q[(k + 1) % 4], radius);
      if (b < a) std::swap(a, b);
      edges.insert({a, b});
    }
  return edges.size();
}

double CubedSphereMesh::total_area() const {
  double sum = 0.0;
  for (const auto& q : corners) sum += spherical_quad_area(q, radius);
  return sum;
}

CubedSphereMesh build_cubed_sphere(int n, double radius) {
  if (n < 1) throw std::invalid_argument("build_cubed_sphere: n must be >= 1");
  CubedSphereMesh mesh;
  mesh.n = n;
  mesh.radius = radius;
  mesh.neighbors = cubed_sphere_tile_neighbors();
  mesh.corners.reserve(6u * n * n);
  for (int tile = 0; tile < 6; ++tile)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double s0 = double(i) / n, s1 = double(i + 1) / n;
        const double t0 = double(j) / n, t1 = double(j + 1) / n;
        mesh.corners.push_back({gnomonic_point(tile, s0, t0, radius),
                                gnomonic_point(tile, s1, t0, radius),
                                gnomonic_point(tile, s1, t1, radius),
                                gnomonic_point(tile, s0, t1, radius)});
      }
  return mesh;
}

double volume_loss_metric(double area_before, double area_after) {
  if (!(area_before > 0.0)) throw std::invalid_argument("volume_loss_metric: empty area");
  return std::abs(area_after - area_before) / area_before;
}

}  // namespace amrlab
