#pragma once

// Quad-tree forest over a structured root grid (planar box or the six
// cubed-sphere tiles): refinement with 2:1 balance, balance-checked
// coarsening, buffered tagging, face links and a generic regrid driver.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "amrlab/sphere_geometry.hpp"

namespace amrlab {

enum Side : int { kWest = 0, kEast = 1, kSouth = 2, kNorth = 3 };

inline int opposite_side(int side) { return side ^ 1; }
inline int side_axis(int side) { return side >> 1; }

struct CellKey {
  int tile = 0;
  int level = 0;
  int i = 0;  // index along s within the tile at this level
  int j = 0;  // index along t

  std::uint64_t id() const {
    return (std::uint64_t(tile) << 61) | (std::uint64_t(level) << 56) |
           (std::uint64_t(i) << 28) | std::uint64_t(j);
  }
  static CellKey from_id(std::uint64_t id) {
    return {int(id >> 61), int((id >> 56) & 31u), int((id >> 28) & 0xFFFFFFFu),
            int(id & 0xFFFFFFFu)};
  }
  CellKey parent() const { return {tile, level - 1, i >> 1, j >> 1}; }
  /// Child c = cx + 2 cy.
  CellKey child(int c) const { return {tile, level + 1, 2 * i + (c & 1), 2 * j + (c >> 1)}; }
  int child_position() const { return (i & 1) + 2 * (j & 1); }
  bool operator==(const CellKey& o) const {
    return tile == o.tile && level == o.level && i == o.i && j == o.j;
  }
};

struct ForestTopology {
  int ntiles = 1;
  int nx = 1;  // root cells per tile along s
  int ny = 1;  // root cells per tile along t
  TileNeighborTable neighbors;
  bool spherical = false;

  /// Single tile of nx x ny roots; periodic flags wrap the tile onto itself.
  static ForestTopology box(int nx, int ny, bool periodic_x, bool periodic_y);
  static ForestTopology cubed_sphere(int n);

  int cells_x(int level) const { return nx << level; }
  int cells_y(int level) const { return ny << level; }

  struct Crossing {
    bool valid = false;
    CellKey cell;
    int side = -1;  // side of `cell` through which it is entered
    bool reversed = false;
  };
  /// Same-level neighbor across `side`, if the domain continues there.
  Crossing cross(const CellKey& key, int side) const;
};

/// Tile parameter space [0,1]^2 -> physical points.
class TileMapping {
 public:
  virtual ~TileMapping() = default;
  virtual Vec3 point(int tile, double s, double t) const = 0;
  virtual bool spherical() const { return false; }
  virtual double radius() const { return 0.0; }
};

class BoxMapping : public TileMapping {
 public:
  BoxMapping(double xlo, double xhi, double ylo, double yhi)
      : xlo_(xlo), xhi_(xhi), ylo_(ylo), yhi_(yhi) {}
  Vec3 point(int, double s, double t) const override {
    return {xlo_ + s * (xhi_ - xlo_), ylo_ + t * (yhi_ - ylo_), 0.0};
  }
  double xlo() const { return xlo_; }
  double xhi() const { return xhi_; }
  double ylo() const { return ylo_; }
  double yhi() const { return yhi_; }

 private:
  double xlo_, xhi_, ylo_, yhi_;
};

class SphereMapping : public TileMapping {
 public:
  explicit SphereMapping(double radius) : radius_(radius) {}
  Vec3 point(int tile, double s, double t) const override {
    return gnomonic_point(tile, s, t, radius_);
  }
  bool spherical() const override { return true; }
  double radius() const override { return radius_; }

 private:
  double radius_;
};

struct ParamBounds {
  double s0, s1, t0, t1;
};
ParamBounds cell_param_bounds(const ForestTopology& topo, const CellKey& key);

/// Corners counterclockwise: (s0,t0), (s1,t0), (s1,t1), (s0,t1).
std::array<Vec3, 4> cell_corners(const ForestTopology& topo, const TileMapping& map,
                                 const CellKey& key);

/// Planar shoelace area or spherical-excess area, by mapping kind.
double cell_area(const ForestTopology& topo, const TileMapping& map, const CellKey& key);

enum class FaceKind : std::uint8_t { kConformal, kNonconformal, kBoundary };

// Conformal: left/right are the two leaves. Nonconformal: left is the coarse
// leaf and right[0], right[1] the fine leaves ordered along the coarse face.
// Boundary: only left is set. `reversed` flips the along-face node order of
// the right side(s).
struct FaceLink {
  FaceKind kind = FaceKind::kBoundary;
  int left = -1;
  int left_side = -1;
  std::array<int, 2> right{-1, -1};
  int right_side = -1;
  bool reversed = false;
};

enum class CellStatus : std::uint8_t { kAbsent = 0, kLeaf = 1, kRefined = 2 };

struct MeshEditReport {
  int applied = 0;
  int clamped = 0;   // refinement requests at max_level
  int dropped = 0;   // coarsen requests rejected (balance or mixed levels)
  int cascaded = 0;  // extra splits performed to keep 2:1 balance
};

class QuadForest {
 public:
  QuadForest(ForestTopology topo, int max_level);

  const ForestTopology& topology() const { return topo_; }
  int max_level() const { return max_level_; }
  const std::vector<CellKey>& leaves() const { return leaves_; }
  const std::vector<FaceLink>& faces() const { return faces_; }
  std::size_t num_leaves() const { return leaves_.size(); }

  CellStatus status(const CellKey& key) const;
  /// Index into leaves(), or -1.
  int leaf_index(const CellKey& key) const;

  MeshEditReport refine(std::span<const CellKey> cells);
  MeshEditReport coarsen(std::span<const CellKey> parents);

  /// Full scan of every leaf side.
  bool is_balanced() const;
  std::vector<int> leaves_per_level() const;

  struct Adjacent {
    int leaf;
    int entering_side;  // side of the neighbor that is crossed
    int exit_side;      // side of this leaf
  };
  /// Face neighbors of every leaf (1 or 2 per side, none at boundaries).
  const std::vector<std::vector<Adjacent>>& adjacency() const { return adjacency_; }

 private:
  std::uint8_t& status_ref(const CellKey& key);
  std::size_t slot(const CellKey& key) const;
  void ensure_exists(const CellKey& key, MeshEditReport& report);
  void split(const CellKey& key, MeshEditReport& report);
  bool can_coarsen(const CellKey& parent) const;
  void rebuild();
  void collect_leaves(const CellKey& key);

  ForestTopology topo_;
  int max_level_;
  // [tile][level] -> status / leaf index per cell.
  std::vector<std::vector<std::vector<std::uint8_t>>> status_;
  std::vector<std::vector<std::vector<int>>> leaf_index_;
  std::vector<CellKey> leaves_;
  std::vector<FaceLink> faces_;
  std::vector<std::vector<Adjacent>> adjacency_;
};

enum class BufferMetric { kSquare, kFace };

struct RegridPolicy {
  int interval_steps = 1;
  int buffer_cells = 2;
  int max_level = 1;
  double refine_above = 0.0;
  double coarsen_below = 0.0;
  BufferMetric metric = BufferMetric::kSquare;

  /// Throws std::invalid_argument when T < 1, B < 0 or max_level < 0.
  void validate() const;
};

struct TagResult {
  std::vector<CellKey> refine;   // leaves below max_level
  std::vector<CellKey> coarsen;  // parents of coarsenable families
  std::vector<char> buffered;    // per leaf: inside the dilated tag set
};

/// Tag leaves whose value exceeds refine_above, dilate by B neighbor rounds
/// and collect families whose four children all fall below coarsen_below and
/// lie outside the dilated set.
TagResult tag_with_buffer(const QuadForest& forest, std::span<const double> leaf_values,
                          const RegridPolicy& policy);

/// Moves per-leaf data between two forests.
class LeafTransfer {
 public:
  virtual ~LeafTransfer() = default;
  virtual std::size_t values_per_leaf() const = 0;
  virtual void refine(const CellKey& parent, std::span<const double> parent_data,
                      std::array<std::span<double>, 4> children) = 0;
  virtual void coarsen(const CellKey& parent, std::array<std::span<const double>, 4> children,
                       std::span<double> parent_data) = 0;
};

/// Rebuild `data` (laid out leaf-major for `old_forest`) on `new_forest`.
/// Leaves present in both are copied bit for bit.
std::vector<double> transfer_leaf_data(const QuadForest& old_forest,
                                       const QuadForest& new_forest,
                                       std::span<const double> data, LeafTransfer& transfer);

struct RegridOutcome {
  bool changed = false;
  MeshEditReport coarsen_report;
  MeshEditReport refine_report;
};

/// Tag, coarsen, refine (balance cascades included), then transfer `data`.
RegridOutcome regrid(QuadForest& forest, std::span<const double> leaf_values,
                     const RegridPolicy& policy, std::vector<double>& data,
                     LeafTransfer& transfer);

}  // namespace amrlab
