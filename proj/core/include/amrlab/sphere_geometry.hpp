#pragma once

// Cubed-sphere construction (equiangular gnomonic tiles), spherical-excess
// areas, geodesic distance and the pseudo-inverse surface Jacobian.

#include <array>
#include <cmath>
#include <vector>

namespace amrlab {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) { return a * (1.0 / norm(a)); }

// Side numbering shared with the tree mesh: 0 = W (s=0), 1 = E (s=1),
// 2 = S (t=0), 3 = N (t=1). W/E sides run along t, S/N along s.
struct TileNeighbor {
  int tile = -1;
  int side = -1;
  bool reversed = false;
  bool valid() const { return tile >= 0; }
};
using TileNeighborTable = std::vector<std::array<TileNeighbor, 4>>;

/// Unnormalized cube-surface point of tile (0..5) for tangent coordinates
/// a = tan(alpha), b = tan(beta).
Vec3 cube_direction(int tile, double a, double b);

/// Equiangular gnomonic map of tile parameters (s, t) in [0,1]^2 onto the
/// sphere of the given radius.
Vec3 gnomonic_point(int tile, double s, double t, double radius);

/// Tile adjacency found by matching edge endpoints on the cube.
TileNeighborTable cubed_sphere_tile_neighbors();

struct LatLon {
  double lon = 0.0;  // lambda in [-pi, pi)
  double lat = 0.0;  // phi in [-pi/2, pi/2]
};
LatLon to_latlon(const Vec3& p);
Vec3 from_latlon(double lon, double lat, double radius);

/// Unit eastward and northward vectors at (lon, lat).
Vec3 east_vector(double lon, double lat);
Vec3 north_vector(double lon, double lat);

/// Spherical excess r^2 (A + B + C - pi). Throws std::invalid_argument for
/// degenerate (coincident, collinear or antipodal) vertices.
double spherical_triangle_area(const Vec3& p1, const Vec3& p2, const Vec3& p3, double radius);

/// Quad area as two excess triangles split along the diagonal that starts
/// at the lexicographically smallest corner (x, then y, then z).
double spherical_quad_area(const std::array<Vec3, 4>& corners, double radius);

/// Same quad, split along a caller-chosen diagonal (0: corners 0-2, 1: 1-3).
double spherical_quad_area_split(const std::array<Vec3, 4>& corners, double radius,
                                 int diagonal);

/// Sum of the two flat (chordal) triangles of a quad.
double chordal_quad_area(const std::array<Vec3, 4>& corners);

/// Great-circle distance r acos(...), clamped to [0, pi r].
double geodesic_distance(double lon1, double lat1, double lon2, double lat2, double radius);

/// Moore-Penrose inverse of the 3x2 matrix with columns a1, a2. Row k of
/// the result is the contravariant vector of reference coordinate k.
/// Throws std::invalid_argument when the columns are (nearly) dependent.
std::array<Vec3, 2> pseudo_inverse_jacobian(const Vec3& a1, const Vec3& a2);

struct CubedSphereMesh {
  int n = 0;
  double radius = 1.0;
  TileNeighborTable neighbors;
  // Element corners counterclockwise seen from outside, tile-major then
  // row-major (t index outer).
  std::vector<std::array<Vec3, 4>> corners;

  std::size_t num_elements() const { return corners.size(); }
  std::size_t num_faces() const;
  std::size_t num_vertices() const;
  double total_area() const;
};

/// Throws std::invalid_argument for n < 1.
CubedSphereMesh build_cubed_sphere(int n, double radius);

/// |A_after - A_before| / A_before.
double volume_loss_metric(double area_before, double area_after);

}  // namespace amrlab
