#include "amrlab/tree_mesh.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <tuple>

namespace amrlab {

ForestTopology ForestTopology::box(int nx, int ny, bool periodic_x, bool periodic_y) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("ForestTopology::box: need nx, ny >= 1");
  ForestTopology t;
  t.ntiles = 1;
  t.nx = nx;
  t.ny = ny;
  t.neighbors.resize(1);
  if (periodic_x) {
    t.neighbors[0][kWest] = {0, kEast, false};
    t.neighbors[0][kEast] = {0, kWest, false};
  }
  if (periodic_y) {
    t.neighbors[0][kSouth] = {0, kNorth, false};
    t.neighbors[0][kNorth] = {0, kSouth, false};
  }
  return t;
}

ForestTopology ForestTopology::cubed_sphere(int n) {
  if (n < 1) throw std::invalid_argument("ForestTopology::cubed_sphere: need n >= 1");
  ForestTopology t;
  t.ntiles = 6;
  t.nx = n;
  t.ny = n;
  t.neighbors = cubed_sphere_tile_neighbors();
  t.spherical = true;
  return t;
}

ForestTopology::Crossing ForestTopology::cross(const CellKey& key, int side) const {
  const int nxl = cells_x(key.level);
  const int nyl = cells_y(key.level);
  Crossing c;
  CellKey nb = key;
  switch (side) {
    case kWest: nb.i -= 1; break;
    case kEast: nb.i += 1; break;
    case kSouth: nb.j -= 1; break;
    default: nb.j += 1; break;
  }
  if (nb.i >= 0 && nb.i < nxl && nb.j >= 0 && nb.j < nyl) {
    c.valid = true;
    c.cell = nb;
    c.side = opposite_side(side);
    return c;
  }
  const TileNeighbor& tn = neighbors[key.tile][side];
  if (!tn.valid()) return c;
  const int along = side_axis(side) == 0 ? key.j : key.i;
  const int nalong_nb = side_axis(tn.side) == 0 ? cells_y(key.level) : cells_x(key.level);
  const int t = tn.reversed ? nalong_nb - 1 - along : along;
  CellKey out{tn.tile, key.level, 0, 0};
  switch (tn.side) {
    case kWest: out.i = 0; out.j = t; break;
    case kEast: out.i = nxl - 1; out.j = t; break;
    case kSouth: out.i = t; out.j = 0; break;
    default: out.i = t; out.j = nyl - 1; break;
  }
  c.valid = true;
  c.cell = out;
  c.side = tn.side;
  c.reversed = tn.reversed;
  return c;
}

ParamBounds cell_param_bounds(const ForestTopology& topo, const CellKey& key) {
  const double nxl = topo.cells_x(key.level);
  const double nyl = topo.cells_y(key.level);
  return {key.i / nxl, (key.i + 1) / nxl, key.j / nyl, (key.j + 1) / nyl};
}

std::array<Vec3, 4> cell_corners(const ForestTopology& topo, const TileMapping& map,
                                 const CellKey& key) {
  const ParamBounds b = cell_param_bounds(topo, key);
  return {map.point(key.tile, b.s0, b.t0), map.point(key.tile, b.s1, b.t0),
          map.point(key.tile, b.s1, b.t1), map.point(key.tile, b.s0, b.t1)};
}

double cell_area(const ForestTopology& topo, const TileMapping& map, const CellKey& key) {
  const auto c = cell_corners(topo, map, key);
  if (map.spherical()) return spherical_quad_area(c, map.radius());
  double a = 0.0;
  for (int k = 0; k < 4; ++k) {
    const Vec3& p = c[k];
    const Vec3& q = c[(k + 1) % 4];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

QuadForest::QuadForest(ForestTopology topo, int max_level)
    : topo_(std::move(topo)), max_level_(max_level) {
  if (max_level_ < 0 || max_level_ > 20)
    throw std::invalid_argument("QuadForest: max_level must lie in [0, 20]");
  if (int(topo_.neighbors.size()) != topo_.ntiles)
    throw std::invalid_argument("QuadForest: neighbor table does not match tile count");
  status_.resize(topo_.ntiles);
  leaf_index_.resize(topo_.ntiles);
  for (int t = 0; t < topo_.ntiles; ++t) {
    status_[t].resize(max_level_ + 1);
    leaf_index_[t].resize(max_level_ + 1);
    for (int l = 0; l <= max_level_; ++l) {
      const std::size_t n = std::size_t(topo_.cells_x(l)) * topo_.cells_y(l);
      status_[t][l].assign(n, std::uint8_t(CellStatus::kAbsent));
      leaf_index_[t][l].assign(n, -1);
    }
    std::fill(status_[t][0].begin(), status_[t][0].end(), std::uint8_t(CellStatus::kLeaf));
  }
  rebuild();
}

std::size_t QuadForest::slot(const CellKey& key) const {
  return std::size_t(key.j) * topo_.cells_x(key.level) + key.i;
}

std::uint8_t& QuadForest::status_ref(const CellKey& key) {
  return status_[key.tile][key.level][slot(key)];
}

CellStatus QuadForest::status(const CellKey& key) const {
  if (key.level < 0 || key.level > max_level_) return CellStatus::kAbsent;
  return CellStatus(status_[key.tile][key.level][slot(key)]);
}

int QuadForest::leaf_index(const CellKey& key) const {
  if (key.level < 0 || key.level > max_level_) return -1;
  return leaf_index_[key.tile][key.level][slot(key)];
}

void QuadForest::ensure_exists(const CellKey& key, MeshEditReport& report) {
  if (status(key) != CellStatus::kAbsent) return;
  const CellKey p = key.parent();
  ensure_exists(p, report);
  if (status(p) == CellStatus::kLeaf) {
    split(p, report);
    ++report.cascaded;
  }
}

void QuadForest::split(const CellKey& key, MeshEditReport& report) {
  // Same-level neighbors must exist first so the children see at most one
  // level of difference across every face.
  for (int s = 0; s < 4; ++s) {
    const auto c = topo_.cross(key, s);
    if (c.valid && status(c.cell) == CellStatus::kAbsent) ensure_exists(c.cell, report);
  }
  if (status(key) != CellStatus::kLeaf) return;
  status_ref(key) = std::uint8_t(CellStatus::kRefined);
  for (int c = 0; c < 4; ++c) status_ref(key.child(c)) = std::uint8_t(CellStatus::kLeaf);
}

MeshEditReport QuadForest::refine(std::span<const CellKey> cells) {
  MeshEditReport report;
  for (const CellKey& k : cells) {
    if (status(k) != CellStatus::kLeaf) continue;
    if (k.level >= max_level_) {
      ++report.clamped;
      continue;
    }
    split(k, report);
    ++report.applied;
  }
  rebuild();
  return report;
}

bool QuadForest::can_coarsen(const CellKey& parent) const {
  if (parent.level < 0 || parent.level >= max_level_) return false;
  if (status(parent) != CellStatus::kRefined) return false;
  for (int c = 0; c < 4; ++c)
    if (status(parent.child(c)) != CellStatus::kLeaf) return false;
  for (int c = 0; c < 4; ++c) {
    const CellKey ch = parent.child(c);
    for (int s = 0; s < 4; ++s) {
      const auto x = topo_.cross(ch, s);
      if (!x.valid) continue;
      // Siblings are leaves by the check above; any refined same-level
      // neighbor would end up two levels finer than the parent.
      if (status(x.cell) == CellStatus::kRefined) return false;
    }
  }
  return true;
}

MeshEditReport QuadForest::coarsen(std::span<const CellKey> parents) {
  MeshEditReport report;
  for (const CellKey& p : parents) {
    if (!can_coarsen(p)) {
      ++report.dropped;
      continue;
    }
    for (int c = 0; c < 4; ++c) status_ref(p.child(c)) = std::uint8_t(CellStatus::kAbsent);
    status_ref(p) = std::uint8_t(CellStatus::kLeaf);
    ++report.applied;
  }
  rebuild();
  return report;
}

void QuadForest::collect_leaves(const CellKey& key) {
  const CellStatus st = status(key);
  if (st == CellStatus::kLeaf) {
    leaf_index_[key.tile][key.level][slot(key)] = int(leaves_.size());
    leaves_.push_back(key);
  } else if (st == CellStatus::kRefined) {
    for (int c = 0; c < 4; ++c) collect_leaves(key.child(c));
  }
}

void QuadForest::rebuild() {
  leaves_.clear();
  for (auto& per_tile : leaf_index_)
    for (auto& lvl : per_tile) std::fill(lvl.begin(), lvl.end(), -1);
  for (int t = 0; t < topo_.ntiles; ++t)
    for (int rj = 0; rj < topo_.ny; ++rj)
      for (int ri = 0; ri < topo_.nx; ++ri) collect_leaves({t, 0, ri, rj});

  faces_.clear();
  adjacency_.assign(leaves_.size(), {});
  for (int e = 0; e < int(leaves_.size()); ++e) {
    const CellKey& k = leaves_[e];
    for (int s = 0; s < 4; ++s) {
      const auto x = topo_.cross(k, s);
      if (!x.valid) {
        FaceLink f;
        f.kind = FaceKind::kBoundary;
        f.left = e;
        f.left_side = s;
        faces_.push_back(f);
        continue;
      }
      const CellStatus st = status(x.cell);
      if (st == CellStatus::kLeaf) {
        const int nb = leaf_index(x.cell);
        adjacency_[e].push_back({nb, x.side, s});
        const auto mine = std::make_tuple(k.id(), s);
        const auto theirs = std::make_tuple(x.cell.id(), x.side);
        if (mine < theirs) {
          FaceLink f;
          f.kind = FaceKind::kConformal;
          f.left = e;
          f.left_side = s;
          f.right = {nb, -1};
          f.right_side = x.side;
          f.reversed = x.reversed;
          faces_.push_back(f);
        }
      } else if (st == CellStatus::kRefined) {
        // This leaf is the coarse side; children touching the entered side.
        std::array<CellKey, 2> fine;
        for (int b = 0; b < 2; ++b) {
          CellKey ch;
          switch (x.side) {
            case kWest: ch = x.cell.child(0 + 2 * b); break;
            case kEast: ch = x.cell.child(1 + 2 * b); break;
            case kSouth: ch = x.cell.child(b); break;
            default: ch = x.cell.child(2 + b); break;
          }
          fine[b] = ch;
        }
        if (x.reversed) std::swap(fine[0], fine[1]);
        FaceLink f;
        f.kind = FaceKind::kNonconformal;
        f.left = e;
        f.left_side = s;
        f.right = {leaf_index(fine[0]), leaf_index(fine[1])};
        f.right_side = x.side;
        f.reversed = x.reversed;
        if (f.right[0] < 0 || f.right[1] < 0)
          throw std::logic_error("QuadForest: 2:1 balance violated while building faces");
        faces_.push_back(f);
        adjacency_[e].push_back({f.right[0], x.side, s});
        adjacency_[e].push_back({f.right[1], x.side, s});
      } else {
        const CellKey p = x.cell.parent();
        const int nb = leaf_index(p);
        if (nb < 0) throw std::logic_error("QuadForest: 2:1 balance violated while building faces");
        adjacency_[e].push_back({nb, x.side, s});
      }
    }
  }
}

bool QuadForest::is_balanced() const {
  for (const CellKey& k : leaves_) {
    for (int s = 0; s < 4; ++s) {
      const auto x = topo_.cross(k, s);
      if (!x.valid) continue;
      const CellStatus st = status(x.cell);
      if (st == CellStatus::kRefined) {
        for (int c = 0; c < 4; ++c) {
          const CellKey ch = x.cell.child(c);
          const bool touches = (x.side == kWest && (c & 1) == 0) ||
                               (x.side == kEast && (c & 1) == 1) ||
                               (x.side == kSouth && c < 2) || (x.side == kNorth && c >= 2);
          if (touches && status(ch) != CellStatus::kLeaf) return false;
        }
      } else if (st == CellStatus::kAbsent) {
        if (status(x.cell.parent()) != CellStatus::kLeaf) return false;
      }
    }
  }
  return true;
}

std::vector<int> QuadForest::leaves_per_level() const {
  std::vector<int> counts(max_level_ + 1, 0);
  for (const CellKey& k : leaves_) ++counts[k.level];
  return counts;
}

void RegridPolicy::validate() const {
  if (interval_steps < 1) throw std::invalid_argument("RegridPolicy: interval T must be >= 1");
  if (buffer_cells < 0) throw std::invalid_argument("RegridPolicy: buffer B must be >= 0");
  if (max_level < 0) throw std::invalid_argument("RegridPolicy: max_level must be >= 0");
}

TagResult tag_with_buffer(const QuadForest& forest, std::span<const double> leaf_values,
                          const RegridPolicy& policy) {
  policy.validate();
  const std::size_t n = forest.num_leaves();
  if (leaf_values.size() != n)
    throw std::invalid_argument("tag_with_buffer: one value per leaf required");
  const auto& adj = forest.adjacency();

  std::vector<char> tagged(n, 0);
  for (std::size_t e = 0; e < n; ++e) tagged[e] = leaf_values[e] > policy.refine_above;

  for (int round = 0; round < policy.buffer_cells; ++round) {
    std::vector<char> next = tagged;
    for (std::size_t e = 0; e < n; ++e) {
      if (!tagged[e]) continue;
      for (const auto& a : adj[e]) {
        next[a.leaf] = 1;
        if (policy.metric != BufferMetric::kSquare) continue;
        // Diagonal neighbors: one hop across, then one hop perpendicular.
        const int axis_in = side_axis(a.entering_side);
        for (const auto& b : adj[a.leaf])
          if (side_axis(b.exit_side) != axis_in) next[b.leaf] = 1;
      }
    }
    tagged.swap(next);
  }

  TagResult out;
  out.buffered = tagged;
  for (std::size_t e = 0; e < n; ++e)
    if (tagged[e] && forest.leaves()[e].level < policy.max_level &&
        forest.leaves()[e].level < forest.max_level())
      out.refine.push_back(forest.leaves()[e]);

  std::vector<std::uint64_t> seen;
  for (std::size_t e = 0; e < n; ++e) {
    const CellKey& k = forest.leaves()[e];
    if (k.level == 0 || k.child_position() != 0) continue;
    const CellKey p = k.parent();
    bool ok = true;
    for (int c = 0; c < 4 && ok; ++c) {
      const int idx = forest.leaf_index(p.child(c));
      if (idx < 0 || tagged[idx] || !(leaf_values[idx] < policy.coarsen_below)) ok = false;
    }
    if (ok) out.coarsen.push_back(p);
  }
  return out;
}

namespace {

struct TransferContext {
  const QuadForest& old_forest;
  std::span<const double> data;
  LeafTransfer& transfer;
  std::size_t stride;
  std::unordered_map<std::uint64_t, std::vector<double>> memo;

  std::vector<double> get(const CellKey& key) {
    const int idx = old_forest.leaf_index(key);
    if (idx >= 0) {
      auto first = data.begin() + std::ptrdiff_t(idx * stride);
      return std::vector<double>(first, first + std::ptrdiff_t(stride));
    }
    if (auto it = memo.find(key.id()); it != memo.end()) return it->second;
    if (old_forest.status(key) == CellStatus::kRefined) {
      std::array<std::vector<double>, 4> kids;
      for (int c = 0; c < 4; ++c) kids[c] = get(key.child(c));
      std::vector<double> out(stride);
      transfer.coarsen(key, {std::span<const double>(kids[0]), std::span<const double>(kids[1]),
                             std::span<const double>(kids[2]), std::span<const double>(kids[3])},
                       out);
      memo[key.id()] = out;
      return out;
    }
    if (key.level == 0) throw std::logic_error("transfer_leaf_data: root missing in old forest");
    const CellKey p = key.parent();
    const std::vector<double> pd = get(p);
    std::array<std::vector<double>, 4> kids;
    for (auto& v : kids) v.assign(stride, 0.0);
    transfer.refine(p, pd,
                    {std::span<double>(kids[0]), std::span<double>(kids[1]),
                     std::span<double>(kids[2]), std::span<double>(kids[3])});
    for (int c = 0; c < 4; ++c) memo[p.child(c).id()] = kids[c];
    return kids[key.child_position()];
  }
};

}  // namespace

std::vector<double> transfer_leaf_data(const QuadForest& old_forest,
                                       const QuadForest& new_forest,
                                       std::span<const double> data, LeafTransfer& transfer) {
  const std::size_t stride = transfer.values_per_leaf();
  if (data.size() != stride * old_forest.num_leaves())
    throw std::invalid_argument("transfer_leaf_data: data size does not match old forest");
  TransferContext ctx{old_forest, data, transfer, stride, {}};
  std::vector<double> out(stride * new_forest.num_leaves());
  for (std::size_t e = 0; e < new_forest.num_leaves(); ++e) {
    const auto v = ctx.get(new_forest.leaves()[e]);
    std::copy(v.begin(), v.end(), out.begin() + std::ptrdiff_t(e * stride));
  }
  return out;
}

RegridOutcome regrid(QuadForest& forest, std::span<const double> leaf_values,
                     const RegridPolicy& policy, std::vector<double>& data,
                     LeafTransfer& transfer) {
  RegridOutcome outcome;
  const TagResult tags = tag_with_buffer(forest, leaf_values, policy);
  if (tags.refine.empty() && tags.coarsen.empty()) return outcome;
  const QuadForest old = forest;
  outcome.coarsen_report = forest.coarsen(tags.coarsen);
  std::vector<CellKey> still_leaves;
  for (const CellKey& k : tags.refine)
    if (forest.status(k) == CellStatus::kLeaf) still_leaves.push_back(k);
  outcome.refine_report = forest.refine(still_leaves);
  outcome.changed = outcome.coarsen_report.applied > 0 || outcome.refine_report.applied > 0;
  if (!outcome.changed) return outcome;
  data = transfer_leaf_data(old, forest, data, transfer);
  return outcome;
}

}  // namespace amrlab
