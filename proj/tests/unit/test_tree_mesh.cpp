#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "amrlab/tree_mesh.hpp"
#include "doctest.h"

using namespace amrlab;

namespace {

int count_kind(const QuadForest& f, FaceKind kind) {
  return int(std::count_if(f.faces().begin(), f.faces().end(),
                           [&](const FaceLink& l) { return l.kind == kind; }));
}

// Leaf rectangles in units of the finest possible cell; adjacency and level
// jumps are then decided purely geometrically, without the face links.
struct LeafRect {
  long x0, x1, y0, y1;
  int level;
};

std::vector<LeafRect> leaf_rects(const QuadForest& f) {
  const int top = f.max_level();
  std::vector<LeafRect> out;
  for (const CellKey& k : f.leaves()) {
    const long s = 1L << (top - k.level);
    out.push_back({k.i * s, (k.i + 1) * s, k.j * s, (k.j + 1) * s, k.level});
  }
  return out;
}

bool touching(const LeafRect& a, const LeafRect& b) {
  const bool vertical = (a.x1 == b.x0 || b.x1 == a.x0) &&
                        std::min(a.y1, b.y1) - std::max(a.y0, b.y0) > 0;
  const bool horizontal = (a.y1 == b.y0 || b.y1 == a.y0) &&
                          std::min(a.x1, b.x1) - std::max(a.x0, b.x0) > 0;
  return vertical || horizontal;
}

bool geometric_balance(const QuadForest& f) {
  const auto r = leaf_rects(f);
  for (std::size_t a = 0; a < r.size(); ++a)
    for (std::size_t b = a + 1; b < r.size(); ++b)
      if (touching(r[a], r[b]) && std::abs(r[a].level - r[b].level) > 1) return false;
  return true;
}

std::set<std::uint64_t> leaf_ids(const QuadForest& f) {
  std::set<std::uint64_t> s;
  for (const CellKey& k : f.leaves()) s.insert(k.id());
  return s;
}

// Copies parent values into the children and averages on the way back.
class CopyTransfer : public LeafTransfer {
 public:
  std::size_t values_per_leaf() const override { return 1; }
  void refine(const CellKey&, std::span<const double> p,
              std::array<std::span<double>, 4> c) override {
    for (auto& s : c) s[0] = p[0];
  }
  void coarsen(const CellKey&, std::array<std::span<const double>, 4> c,
               std::span<double> p) override {
    p[0] = 0.25 * (c[0][0] + c[1][0] + c[2][0] + c[3][0]);
  }
};

}  // namespace

TEST_CASE("refine: single root cell gives 4 leaves and 4 interior conformal faces") {
  QuadForest f(ForestTopology::box(1, 1, false, false), 3);
  const CellKey root{0, 0, 0, 0};
  f.refine(std::span(&root, 1));
  CHECK(f.num_leaves() == 4);
  CHECK(count_kind(f, FaceKind::kConformal) == 4);
  CHECK(count_kind(f, FaceKind::kNonconformal) == 0);
  CHECK(count_kind(f, FaceKind::kBoundary) == 8);
}

TEST_CASE("refine: one cell of a 2x2 patch gives 7 leaves and 2 nonconformal faces") {
  QuadForest f(ForestTopology::box(2, 2, false, false), 2);
  const CellKey c{0, 0, 0, 0};
  f.refine(std::span(&c, 1));
  CHECK(f.num_leaves() == 7);
  CHECK(count_kind(f, FaceKind::kNonconformal) == 2);
  // 4 inside the refined cell, 2 between the unrefined roots.
  CHECK(count_kind(f, FaceKind::kConformal) == 6);
  for (const FaceLink& l : f.faces()) {
    if (l.kind != FaceKind::kNonconformal) continue;
    CHECK(f.leaves()[l.left].level == 0);
    CHECK(f.leaves()[l.right[0]].level == 1);
    CHECK(f.leaves()[l.right[1]].level == 1);
  }
}

TEST_CASE("refine: a second split next to a coarser neighbour cascades once") {
  QuadForest f(ForestTopology::box(2, 1, false, false), 3);
  const CellKey west{0, 0, 0, 0};
  f.refine(std::span(&west, 1));
  // East child of the refined root touches the level-0 root on its right.
  const CellKey inner = west.child(1);
  const MeshEditReport r = f.refine(std::span(&inner, 1));
  CHECK(r.cascaded == 1);
  CHECK(f.status(CellKey{0, 0, 1, 0}) == CellStatus::kRefined);
  CHECK(f.is_balanced());
  CHECK(geometric_balance(f));
}

TEST_CASE("refine: requests at max_level are clamped and reported") {
  QuadForest f(ForestTopology::box(1, 1, false, false), 0);
  const CellKey root{0, 0, 0, 0};
  const MeshEditReport r = f.refine(std::span(&root, 1));
  CHECK(r.clamped == 1);
  CHECK(f.num_leaves() == 1);
}

TEST_CASE("coarsen: round trip restores the original mesh") {
  QuadForest f(ForestTopology::box(3, 2, true, false), 2);
  const auto before = leaf_ids(f);
  const auto faces_before = f.faces().size();
  const CellKey c{0, 0, 1, 1};
  f.refine(std::span(&c, 1));
  CHECK(leaf_ids(f) != before);
  f.coarsen(std::span(&c, 1));
  CHECK(leaf_ids(f) == before);
  CHECK(f.faces().size() == faces_before);
}

TEST_CASE("coarsen: a family next to a level+2 leaf is dropped") {
  QuadForest f(ForestTopology::box(2, 1, false, false), 3);
  const CellKey west{0, 0, 0, 0}, east{0, 0, 1, 0};
  const CellKey both[] = {west, east};
  f.refine(both);
  const CellKey deep = east.child(0);  // touches the west family
  f.refine(std::span(&deep, 1));
  const auto before = leaf_ids(f);
  const MeshEditReport r = f.coarsen(std::span(&west, 1));
  CHECK(r.dropped == 1);
  CHECK(r.applied == 0);
  CHECK(leaf_ids(f) == before);
}

TEST_CASE("coarsen: empty request leaves the forest alone") {
  QuadForest f(ForestTopology::box(2, 2, false, false), 2);
  const CellKey c{0, 0, 1, 0};
  f.refine(std::span(&c, 1));
  const auto before = leaf_ids(f);
  f.coarsen({});
  CHECK(leaf_ids(f) == before);
}

TEST_CASE("tag_with_buffer: nothing above threshold gives empty sets") {
  QuadForest f(ForestTopology::box(4, 4, false, false), 2);
  RegridPolicy p{1, 2, 1, 0.5, -1.0, BufferMetric::kSquare};
  const std::vector<double> v(f.num_leaves(), 0.0);
  const TagResult t = tag_with_buffer(f, v, p);
  CHECK(t.refine.empty());
  CHECK(t.coarsen.empty());
}

TEST_CASE("tag_with_buffer: one tagged cell dilates to a 5x5 block (square) or a diamond (face)") {
  const int n = 9;
  QuadForest f(ForestTopology::box(n, n, false, false), 2);
  std::vector<double> v(f.num_leaves(), 0.0);
  const int ci = 4, cj = 4;
  v[f.leaf_index(CellKey{0, 0, ci, cj})] = 1.0;

  auto expected = [&](BufferMetric m) {
    // Breadth-first dilation over the root grid.
    std::vector<int> dist(n * n, 1 << 20);
    std::vector<std::pair<int, int>> frontier{{ci, cj}};
    dist[cj * n + ci] = 0;
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      auto [i, j] = frontier[k];
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          if (!di && !dj) continue;
          if (m == BufferMetric::kFace && di && dj) continue;
          const int a = i + di, b = j + dj;
          if (a < 0 || b < 0 || a >= n || b >= n || dist[b * n + a] <= dist[j * n + i] + 1) continue;
          dist[b * n + a] = dist[j * n + i] + 1;
          frontier.push_back({a, b});
        }
    }
    std::set<std::pair<int, int>> s;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (dist[j * n + i] <= 2) s.insert({i, j});
    return s;
  };

  for (BufferMetric m : {BufferMetric::kSquare, BufferMetric::kFace}) {
    RegridPolicy p{1, 2, 1, 0.5, -1.0, m};
    const TagResult t = tag_with_buffer(f, v, p);
    std::set<std::pair<int, int>> got;
    for (const CellKey& k : t.refine) got.insert({k.i, k.j});
    CHECK(got == expected(m));
    CHECK(got.size() == (m == BufferMetric::kSquare ? 25u : 13u));
  }
}

TEST_CASE("tag_with_buffer: buffer is clipped at the domain boundary") {
  QuadForest f(ForestTopology::box(6, 6, false, false), 1);
  std::vector<double> v(f.num_leaves(), 0.0);
  v[f.leaf_index(CellKey{0, 0, 0, 0})] = 1.0;
  RegridPolicy p{1, 2, 1, 0.5, -1.0, BufferMetric::kSquare};
  CHECK(tag_with_buffer(f, v, p).refine.size() == 9);
}

TEST_CASE("tag_with_buffer: saturation tags every leaf below max_level") {
  QuadForest f(ForestTopology::box(3, 3, false, false), 2);
  const CellKey c{0, 0, 1, 1};
  f.refine(std::span(&c, 1));
  RegridPolicy p{1, 1, 1, 0.5, -1.0, BufferMetric::kSquare};
  const std::vector<double> v(f.num_leaves(), 2.0);
  const TagResult t = tag_with_buffer(f, v, p);
  CHECK(t.refine.size() == 8);  // the level-1 leaves are already at max_level
}

TEST_CASE("regrid: static field below all thresholds leaves mesh and data bitwise unchanged") {
  QuadForest f(ForestTopology::box(4, 4, true, true), 2);
  const CellKey c{0, 0, 2, 1};
  f.refine(std::span(&c, 1));
  std::vector<double> data(f.num_leaves());
  for (std::size_t k = 0; k < data.size(); ++k) data[k] = std::sin(double(k) + 0.1);
  const auto before_ids = leaf_ids(f);
  const auto before = data;
  RegridPolicy p{1, 2, 2, 10.0, -1.0, BufferMetric::kSquare};
  CopyTransfer tr;
  const std::vector<double> values(f.num_leaves(), 0.0);
  const RegridOutcome o = regrid(f, values, p, data, tr);
  CHECK_FALSE(o.changed);
  CHECK(leaf_ids(f) == before_ids);
  CHECK(data == before);
}

TEST_CASE("regrid: coarsening below threshold returns to the root mesh") {
  QuadForest f(ForestTopology::box(2, 2, false, false), 1);
  const CellKey c{0, 0, 0, 0};
  f.refine(std::span(&c, 1));
  std::vector<double> data(f.num_leaves(), 3.0);
  RegridPolicy p{1, 0, 1, 10.0, 1.0, BufferMetric::kSquare};
  CopyTransfer tr;
  const std::vector<double> values(f.num_leaves(), 0.0);
  const RegridOutcome o = regrid(f, values, p, data, tr);
  CHECK(o.changed);
  CHECK(f.num_leaves() == 4);
  CHECK(data == std::vector<double>(4, 3.0));
}

TEST_CASE("forest property: random edit sequences keep tiling, balance and symmetric links") {
  std::mt19937 rng(1234);
  for (int trial = 0; trial < 40; ++trial) {
    const bool px = trial % 2, py = trial % 3 == 0;
    QuadForest f(ForestTopology::box(3 + trial % 3, 2 + trial % 4, px, py), 4);
    const BoxMapping map(-1.0, 2.0, 0.0, 1.5);
    const double domain = 3.0 * 1.5;
    for (int step = 0; step < 12; ++step) {
      std::vector<CellKey> pick;
      if (rng() % 3) {
        for (const CellKey& k : f.leaves())
          if (rng() % 5 == 0) pick.push_back(k);
        f.refine(pick);
      } else {
        for (const CellKey& k : f.leaves())
          if (k.level > 0 && k.child_position() == 0 && rng() % 2) pick.push_back(k.parent());
        f.coarsen(pick);
      }
      double area = 0.0;
      for (const CellKey& k : f.leaves()) area += cell_area(f.topology(), map, k);
      REQUIRE(std::abs(area - domain) < 1e-12 * domain);
      REQUIRE(f.is_balanced());
      if (!px && !py) REQUIRE(geometric_balance(f));

      const auto& adj = f.adjacency();
      for (std::size_t a = 0; a < adj.size(); ++a)
        for (const auto& n : adj[a]) {
          const auto& back = adj[n.leaf];
          const bool found = std::any_of(back.begin(), back.end(), [&](const auto& m) {
            return m.leaf == int(a) && m.exit_side == n.entering_side;
          });
          REQUIRE(found);
        }
    }
  }
}

TEST_CASE("forest property: refine then coarsen of the same family restores the leaf set") {
  std::mt19937 rng(99);
  QuadForest f(ForestTopology::box(4, 4, true, true), 3);
  for (int step = 0; step < 30; ++step) {
    std::vector<CellKey> leaves = f.leaves();
    const CellKey k = leaves[rng() % leaves.size()];
    if (k.level >= 2) continue;
    const auto before = leaf_ids(f);
    const MeshEditReport r = f.refine(std::span(&k, 1));
    if (r.cascaded) continue;  // neighbours changed as well; not a pure round trip
    f.coarsen(std::span(&k, 1));
    CHECK(leaf_ids(f) == before);
    // Leave some refinement behind so later rounds see mixed meshes.
    f.refine(std::span(&k, 1));
  }
}

TEST_CASE("face links: every conformal face pairs two leaves of the same level") {
  QuadForest f(ForestTopology::box(3, 3, true, false), 2);
  const CellKey c{0, 0, 1, 1};
  f.refine(std::span(&c, 1));
  for (const FaceLink& l : f.faces()) {
    if (l.kind != FaceKind::kConformal) continue;
    CHECK(f.leaves()[l.left].level == f.leaves()[l.right[0]].level);
    CHECK(l.right_side == opposite_side(l.left_side));
  }
}

TEST_CASE("policy validation rejects bad parameters") {
  RegridPolicy p;
  p.interval_steps = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = RegridPolicy{};
  p.buffer_cells = -1;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = RegridPolicy{};
  p.max_level = -1;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("cell key ids round trip") {
  const CellKey k{5, 7, 123456, 654321};
  CHECK(CellKey::from_id(k.id()) == k);
  CHECK(k.child(3).parent() == k);
  CHECK(k.child(2).child_position() == 2);
}
