#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "amrlab/patch_amr.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace amrlab;

namespace {
constexpr double kPi = std::numbers::pi;

std::vector<oracle::Rect> rects(const std::vector<IndexBox>& boxes) {
  std::vector<oracle::Rect> r;
  for (const IndexBox& b : boxes) r.push_back({b.ilo, b.jlo, b.ihi, b.jhi});
  return r;
}

oracle::ClusterCheck verify(const TagGrid& t, const std::vector<IndexBox>& boxes,
                            const ClusterParams& p) {
  return oracle::check_clustering(t.nx, t.ny, t.flag, rects(boxes), p.efficiency, p.blocking,
                                  p.max_size);
}

PatchConfig base_config(int n, int max_level = 1) {
  PatchConfig c;
  c.domain.nx = c.domain.ny = n;
  c.max_level = max_level;
  c.cluster = {0.7, 4, 16};
  c.policy.buffer_cells = 1;
  c.policy.refine_above = 0.1;
  return c;
}

std::shared_ptr<FvAdvection> uniform_wind(double u, double v) {
  return std::make_shared<FvAdvection>([u, v](double, double, double) { return Vec3{u, v, 0}; });
}

// x-flux equal to a fixed value per level; no y-flux.
class LevelFlux : public FvPhysics {
 public:
  LevelFlux(double coarse, double fine) : f_{coarse, fine} {}
  int nvars() const override { return 1; }
  double mirror_sign(int, int) const override { return 1.0; }
  void fluxes(const Patch& p, const LevelGeometry& geo, double, int, std::vector<double>& fx,
              std::vector<double>& fy) const override {
    fx.assign(std::size_t(p.box.height()) * (p.box.width() + 1), f_[geo.level]);
    fy.assign(std::size_t(p.box.height() + 1) * p.box.width(), 0.0);
  }
  double max_speed(const Patch&, const LevelGeometry& geo, double) const override {
    return 1.0 / geo.dx;
  }

 private:
  double f_[2];
};

double cell_value(const PatchHierarchy& h, int l, int i, int j) {
  for (const Patch& p : h.level(l).patches)
    if (p.box.contains(i, j)) return p.at(0, i, j);
  throw std::logic_error("cell not on level");
}

double blob(double x, double y) {
  const double r2 = (x - 0.35) * (x - 0.35) + (y - 0.4) * (y - 0.4);
  return std::exp(-r2 / 0.01);
}

// Relative change of the tracer integral over 24 coarse steps of a blob
// advected diagonally, regridding every 4 steps.
double blob_drift(bool reflux) {
  PatchConfig c = base_config(32);
  c.reflux = reflux;
  c.order = 2;
  PatchHierarchy h(c, uniform_wind(1.0, 0.5));
  const TagIndicator tag = [](const double* q, double, double) { return q[0]; };
  h.initialize([](double x, double y, double* q) { q[0] = blob(x, y); }, tag);
  REQUIRE(h.num_levels() == 2);
  const double before = h.integral(0);
  const double dt = 0.5 * h.stable_dt(1.0);
  for (int s = 1; s <= 24; ++s) {
    h.advance(dt);
    if (s % 4 == 0) h.regrid(tag);
  }
  return std::abs(h.integral(0) - before) / before;
}
}  // namespace

TEST_CASE("berger-rigoutsos: a single tag with blocking 4 gives one 4x4 box") {
  TagGrid t(16, 16);
  t.at(5, 9) = 1;
  const auto boxes = berger_rigoutsos(t, {0.7, 4, 16});
  REQUIRE(boxes.size() == 1);
  CHECK(boxes[0].width() == 4);
  CHECK(boxes[0].height() == 4);
  CHECK(boxes[0].contains(5, 9));
  CHECK(boxes[0].ilo == 4);
  CHECK(boxes[0].jlo == 8);
}

TEST_CASE("berger-rigoutsos: a full rectangle is returned as is") {
  TagGrid t(32, 32);
  for (int j = 8; j < 20; ++j)
    for (int i = 4; i < 16; ++i) t.at(i, j) = 1;
  const auto boxes = berger_rigoutsos(t, {0.7, 4, 32});
  REQUIRE(boxes.size() == 1);
  CHECK(boxes[0] == IndexBox{4, 8, 15, 19, 0});
}

TEST_CASE("berger-rigoutsos: empty tags give no boxes") {
  CHECK(berger_rigoutsos(TagGrid(8, 8), {}).empty());
}

TEST_CASE("berger-rigoutsos: an L-shape at efficiency 0.7 splits into two efficient boxes") {
  TagGrid t(32, 32);
  for (int j = 0; j < 16; ++j)
    for (int i = 0; i < 4; ++i) t.at(i, j) = 1;
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 16; ++i) t.at(i, j) = 1;
  const ClusterParams p{0.7, 2, 32};
  const auto boxes = berger_rigoutsos(t, p);
  CHECK(boxes.size() == 2);
  const auto chk = verify(t, boxes, p);
  CHECK(chk.ok());
}

TEST_CASE("berger-rigoutsos: invalid parameters are rejected") {
  TagGrid t(8, 8);
  t.at(0, 0) = 1;
  CHECK_THROWS_AS(berger_rigoutsos(t, {0.0, 2, 8}), std::invalid_argument);
  CHECK_THROWS_AS(berger_rigoutsos(t, {0.7, 2, 7}), std::invalid_argument);
  CHECK_THROWS_AS(berger_rigoutsos(TagGrid(6, 6), {0.7, 4, 8}), std::invalid_argument);
}

TEST_CASE("berger-rigoutsos property: random tag sets meet every postcondition") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int blocking = 1 << (rng() % 3);
    const int nx = blocking * (2 + int(rng() % 12)), ny = blocking * (2 + int(rng() % 12));
    const int max_size = blocking * (1 + int(rng() % 8));
    const double eff = 0.3 + 0.65 * double(rng() % 1000) / 1000.0;
    TagGrid t(nx, ny);
    const int kind = trial % 3;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        if (kind == 0) t.at(i, j) = rng() % 5 == 0;
        else {
          const double dx = i - 0.4 * nx, dy = j - 0.6 * ny;
          t.at(i, j) = dx * dx + dy * dy < 0.1 * nx * ny && (kind == 1 || rng() % 3 != 0);
        }
      }
    const ClusterParams p{eff, blocking, max_size};
    const auto chk = verify(t, berger_rigoutsos(t, p), p);
    CHECK(chk.covered);
    CHECK(chk.efficient);
    CHECK(chk.blocked);
    CHECK(chk.sized);
    CHECK(chk.disjoint);
  }
}

TEST_CASE("berger-rigoutsos: disallowed units are never covered") {
  TagGrid t(16, 16);
  for (int j = 0; j < 16; ++j)
    for (int i = 0; i < 16; ++i) t.at(i, j) = 1;
  std::vector<char> allowed(64, 1);
  allowed[3 * 8 + 3] = 0;
  const auto boxes = berger_rigoutsos(t, {0.7, 2, 16}, &allowed);
  for (const IndexBox& b : boxes) CHECK_FALSE(b.intersects({6, 6, 7, 7, 0}));
}

TEST_CASE("proper nesting: flush box is clipped, deep box is unchanged") {
  // Coarse 16x16 level whose nesting region is cells 4..11 in both axes.
  std::vector<char> mask(256, 0);
  for (int j = 4; j <= 11; ++j)
    for (int i = 4; i <= 11; ++i) mask[j * 16 + i] = 1;
  const IndexBox flush{4, 8, 15, 15, 1};
  const auto clipped = enforce_proper_nesting({flush}, mask, 16, 16);
  long cells = 0;
  for (const IndexBox& b : clipped) {
    cells += b.cells();
    CHECK(b.ilo >= 8);
    CHECK(b.level == 1);
  }
  CHECK(cells == 8 * 8);
  const IndexBox deep{10, 10, 17, 17, 1};
  const auto kept = enforce_proper_nesting({deep}, mask, 16, 16);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0] == deep);
  CHECK_THROWS_AS(enforce_proper_nesting({deep}, mask, 8, 8), std::invalid_argument);
}

TEST_CASE("proper nesting: level 0 allows every cell") {
  PatchHierarchy h(base_config(16), uniform_wind(1, 0));
  h.initialize_with_boxes([](double, double, double* q) { q[0] = 1.0; }, {{8, 8, 15, 15, 1}});
  for (char m : h.nesting_mask(0)) CHECK(m == 1);
  CHECK(h.properly_nested());
}

TEST_CASE("ghost fill: sibling copy, periodic wrap and wall mirror") {
  PatchConfig c = base_config(16, 0);
  c.cluster = {0.7, 2, 8};  // level 0 is chopped into four 8x8 patches
  auto f = [](double x, double y, double* q) { q[0] = std::sin(7.0 * x) + 3.0 * y * y; };
  PatchHierarchy h(c, uniform_wind(1, 0));
  h.initialize_with_boxes(f, {});
  h.fill_ghosts(0, 0.0);
  const auto& ps = h.level(0).patches;
  REQUIRE(ps.size() == 4);
  const Patch& a = ps[0];  // cells 0..7 x 0..7
  for (int j = 0; j < 8; ++j) {
    CHECK(a.at(0, 8, j) == cell_value(h, 0, 8, j));
    CHECK(a.at(0, -1, j) == cell_value(h, 0, 15, j));
    CHECK(a.at(0, -2, j) == cell_value(h, 0, 14, j));
  }
  CHECK(a.at(0, -1, -1) == cell_value(h, 0, 15, 15));

  c.domain.bx = PatchBoundary::kWall;
  PatchHierarchy w(c, uniform_wind(1, 0));
  w.initialize_with_boxes(f, {});
  w.fill_ghosts(0, 0.0);
  const Patch& b = w.level(0).patches[0];
  for (int j = 0; j < 8; ++j) {
    CHECK(b.at(0, -1, j) == cell_value(w, 0, 0, j));
    CHECK(b.at(0, -2, j) == cell_value(w, 0, 1, j));
  }
}

TEST_CASE("ghost fill: mirrored momentum flips sign at a wall") {
  PatchConfig c = base_config(8, 0);
  c.domain.by = PatchBoundary::kWall;
  const PhysicalConstants pc = PhysicalConstants::nondimensional();
  auto phys = std::make_shared<FvEuler>(pc, [](double, double) { return BackgroundSample{1, 1, 1}; });
  PatchHierarchy h(c, phys);
  h.initialize_with_boxes(
      [](double x, double, double* q) {
        for (int v = 0; v < kEulerVars; ++v) q[v] = 0.1 * (v + 1) + 0.01 * x;
      },
      {});
  h.fill_ghosts(0, 0.0);
  const Patch& p = h.level(0).patches[0];
  CHECK(p.at(kMomY, 3, -1) == -p.at(kMomY, 3, 0));
  CHECK(p.at(kMomX, 3, -1) == p.at(kMomX, 3, 0));
  CHECK(p.at(kRho, 3, 8) == p.at(kRho, 3, 7));
}

TEST_CASE("ghost fill: coarse interpolation reproduces constants and linear data") {
  PatchHierarchy h(base_config(16), uniform_wind(1, 0));
  h.initialize_with_boxes([](double, double, double* q) { q[0] = 3.0; }, {{8, 8, 15, 15, 1}});
  h.fill_ghosts(1, 0.0);
  const Patch& p = h.level(1).patches[0];
  for (int k = 8; k <= 15; ++k) {
    CHECK(p.at(0, 7, k) == 3.0);
    CHECK(p.at(0, 16, k) == 3.0);
    CHECK(p.at(0, k, 6) == 3.0);
  }
  // Linear data: the limited slopes equal the exact gradient.
  auto lin = [](double x, double y) { return 2.0 + 5.0 * x - 3.0 * y; };
  PatchHierarchy g(base_config(16), uniform_wind(1, 0));
  g.initialize_with_boxes([&](double x, double y, double* q) { q[0] = lin(x, y); },
                          {{8, 8, 15, 15, 1}});
  g.fill_ghosts(1, 0.0);
  const Patch& r = g.level(1).patches[0];
  const LevelGeometry& geo = g.level(1).geo;
  for (int k = 8; k <= 15; ++k) {
    CHECK(std::abs(r.at(0, 7, k) - lin(geo.xc(7), geo.yc(k))) < 1e-13);
    CHECK(std::abs(r.at(0, 17, k) - lin(geo.xc(17), geo.yc(k))) < 1e-13);
  }
}

TEST_CASE("fine boxes must align with coarse cells") {
  PatchHierarchy h(base_config(16), uniform_wind(1, 0));
  h.initialize_with_boxes([](double, double, double* q) { q[0] = 1.0; }, {{8, 8, 15, 15, 1}});
  CHECK_NOTHROW(h.fill_ghosts(0, 0.0));
  CHECK_THROWS_AS(
      h.initialize_with_boxes([](double, double, double* q) { q[0] = 1.0; }, {{7, 8, 15, 15, 1}}),
      std::invalid_argument);
}

TEST_CASE("face_interp: constants are reproduced at every order") {
  const double q[4] = {2.5, 2.5, 2.5, 2.5};
  for (int order : {2, 3, 4})
    for (double w : {-1.0, 0.0, 1.0}) CHECK(std::abs(face_interp(q, order, w) - 2.5) < 1e-15);
  CHECK_THROWS_AS(face_interp(q, 5, 1.0), std::invalid_argument);
}

TEST_CASE("face_interp: q_m = m gives m - 1/2 at orders 2 and 4") {
  for (int m : {0, 3, -7, 120}) {
    const double q[4] = {double(m - 2), double(m - 1), double(m), double(m + 1)};
    CHECK(face_interp(q, 2, 1.0) == m - 0.5);
    CHECK(std::abs(face_interp(q, 4, 1.0) - (m - 0.5)) < 1e-13 * (1 + std::abs(m)));
  }
}

TEST_CASE("face_interp: polynomial exactness on cell averages") {
  // Cell averages over [k-1/2, k+1/2] from Simpson; the face sits at 0.
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double a[4] = {u(rng), u(rng), u(rng), u(rng)};
    for (int order : {2, 3, 4}) {
      const int deg = order - 1;
      auto f = [&](double x) {
        double s = 0.0;
        for (int d = deg; d >= 0; --d) s = s * x + a[d];
        return s;
      };
      double q[4];
      for (int k = 0; k < 4; ++k) {
        const double c = k - 1.5;
        q[k] = oracle::simpson(f, c - 0.5, c + 0.5, 8);
      }
      for (double w : {-1.0, 1.0}) CHECK(std::abs(face_interp(q, order, w) - f(0.0)) < 1e-13);
    }
  }
}

TEST_CASE("face_interp: order 3 leans upwind") {
  const double q[4] = {0.0, 0.0, 1.0, 1.0};  // step between q_{m-1} and q_m
  const double right = face_interp(q, 3, 1.0), left = face_interp(q, 3, -1.0);
  CHECK(right < face_interp(q, 4, 0.0));
  CHECK(left > face_interp(q, 4, 0.0));
  CHECK(face_interp(q, 3, 0.0) == face_interp(q, 4, 0.0));
}

TEST_CASE("subcycling: one level matches a hand-written periodic RK3 solver") {
  const int n = 16;
  PatchHierarchy h(base_config(n, 0), uniform_wind(1.0, 0.0));
  auto f = [](double x, double y) { return std::sin(2 * kPi * x) + 0.3 * std::cos(2 * kPi * y); };
  h.initialize_with_boxes([&](double x, double y, double* q) { q[0] = f(x, y); }, {});
  const double dx = 1.0 / n, dt = 0.4 * dx;
  std::vector<double> q(n * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) q[j * n + i] = f((i + 0.5) * dx, (j + 0.5) * dx);
  auto rhs = [&](const std::vector<double>& s) {
    std::vector<double> r(n * n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double lo = 0.5 * (s[j * n + (i + n - 1) % n] + s[j * n + i]);
        const double hi = 0.5 * (s[j * n + i] + s[j * n + (i + 1) % n]);
        r[j * n + i] = -(hi - lo) / dx;
      }
    return r;
  };
  for (int step = 0; step < 10; ++step) {
    h.advance(dt);
    const std::vector<double> q0 = q;
    std::vector<double> k = rhs(q0), q1(n * n), q2(n * n);
    for (int c = 0; c < n * n; ++c) q1[c] = q0[c] + dt * k[c];
    k = rhs(q1);
    for (int c = 0; c < n * n; ++c) q2[c] = 0.75 * q0[c] + 0.25 * (q1[c] + dt * k[c]);
    k = rhs(q2);
    for (int c = 0; c < n * n; ++c) q[c] = q0[c] / 3.0 + 2.0 / 3.0 * (q2[c] + dt * k[c]);
  }
  double d = 0.0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) d = std::max(d, std::abs(cell_value(h, 0, i, j) - q[j * n + i]));
  CHECK(d < 1e-13);
}

TEST_CASE("subcycling: a uniform state stays uniform on two levels") {
  PatchConfig c = base_config(16);
  c.order = 4;
  PatchHierarchy h(c, uniform_wind(0.7, -0.4));
  h.initialize_with_boxes([](double, double, double* q) { q[0] = 1.25; }, {{8, 8, 19, 15, 1}});
  const double dt = 0.5 * h.stable_dt(1.0);
  for (int s = 0; s < 20; ++s) h.advance(dt);
  CHECK(h.max_abs_deviation(0, 1.25) < 1e-14);
  CHECK(h.cfl_warnings() == 0);
}

TEST_CASE("subcycling: an oversized step counts a CFL warning") {
  PatchHierarchy h(base_config(16, 0), uniform_wind(1.0, 0.0));
  h.initialize_with_boxes([](double, double, double* q) { q[0] = 1.0; }, {});
  h.advance(2.0 * h.stable_dt(1.0));
  CHECK(h.cfl_warnings() == 1);
  CHECK_THROWS_AS(h.advance(0.0), std::invalid_argument);
}

TEST_CASE("euler: a small acoustic perturbation does not grow at any order") {
  const PhysicalConstants pc = PhysicalConstants::nondimensional();
  for (int order : {2, 3, 4}) {
    PatchConfig c = base_config(16);
    c.order = order;
    auto phys = std::make_shared<FvEuler>(pc, [](double, double) { return BackgroundSample{1, 1, 1}; });
    PatchHierarchy h(c, phys);
    h.initialize_with_boxes(
        [](double x, double y, double* q) {
          q[kRho] = 1e-10 * std::sin(37.0 * x * y + 3.0 * x);
          q[kMomX] = 0.6;
          q[kMomY] = -0.3;
          q[kTheta] = 0.0;
          q[kTracer] = 1.0;
        },
        {{8, 8, 19, 23, 1}});
    const double dt = 0.5 * h.stable_dt(1.0);
    for (int s = 0; s < 200; ++s) h.advance(dt);
    CHECK(h.max_abs_deviation(kRho, 0.0) < 1e-9);
  }
}

TEST_CASE("reflux: identical coarse and fine fluxes leave the state unchanged") {
  PatchHierarchy h(base_config(16), std::make_shared<LevelFlux>(1.0, 1.0));
  h.initialize_with_boxes([](double, double, double* q) { q[0] = 2.0; }, {{8, 8, 15, 15, 1}});
  h.advance(1.0 / 64.0);
  CHECK(h.max_abs_deviation(0, 2.0) == 0.0);
}

TEST_CASE("reflux: a unit flux mismatch moves each adjacent coarse cell by dt area / volume") {
  // Fine x-flux 1, coarse x-flux 0. Fine cells and covered coarse cells see
  // a uniform flux and stay put; the two coarse neighbors of the fine box
  // along x exchange exactly dt * dy / (dx dy).
  PatchHierarchy h(base_config(16), std::make_shared<LevelFlux>(0.0, 1.0));
  h.initialize_with_boxes([](double, double, double* q) { q[0] = 2.0; }, {{8, 8, 15, 15, 1}});
  const double dt = 1.0 / 64.0, dx = 1.0 / 16.0;
  const double before = h.integral(0);
  h.advance(dt);
  for (int j = 4; j <= 7; ++j) {
    CHECK(cell_value(h, 0, 3, j) == 2.0 - dt / dx);
    CHECK(cell_value(h, 0, 8, j) == 2.0 + dt / dx);
    CHECK(cell_value(h, 0, 2, j) == 2.0);
    CHECK(cell_value(h, 0, 5, j) == 2.0);
  }
  CHECK(cell_value(h, 0, 3, 3) == 2.0);
  CHECK(std::abs(h.integral(0) - before) < 1e-15);
}

TEST_CASE("average down: four children 1..4 give 2.5 and linear data its cell mean") {
  PatchHierarchy h(base_config(16), uniform_wind(1, 0));
  const double dxf = 1.0 / 32.0;
  h.initialize_with_boxes(
      [&](double x, double y, double* q) {
        const int i = int(x / dxf), j = int(y / dxf);
        q[0] = 1.0 + (i & 1) + 2.0 * (j & 1);
      },
      {{8, 8, 15, 15, 1}});
  for (int j = 4; j <= 7; ++j)
    for (int i = 4; i <= 7; ++i) CHECK(cell_value(h, 0, i, j) == 2.5);

  auto lin = [](double x, double y) { return 0.5 - 4.0 * x + 9.0 * y; };
  PatchHierarchy g(base_config(16), uniform_wind(1, 0));
  g.initialize_with_boxes([&](double x, double y, double* q) { q[0] = lin(x, y); },
                          {{8, 8, 15, 15, 1}});
  const LevelGeometry& geo = g.level(0).geo;
  for (int j = 4; j <= 7; ++j)
    for (int i = 4; i <= 7; ++i)
      CHECK(std::abs(cell_value(g, 0, i, j) - lin(geo.xc(i), geo.yc(j))) < 1e-13);
}

TEST_CASE("two-way coupling conserves the blob integral; one-way drifts") {
  const double two_way = blob_drift(true);
  const double one_way = blob_drift(false);
  MESSAGE("two-way drift " << two_way << ", one-way drift " << one_way);
  CHECK(two_way < 1e-12);
  CHECK(one_way > 1e-8);
  CHECK(one_way > two_way);
}

TEST_CASE("regrid property: boxes stay disjoint and nested while the blob moves") {
  PatchConfig c = base_config(32, 2);
  c.cluster = {0.7, 4, 16};
  PatchHierarchy h(c, uniform_wind(1.0, 0.5));
  const TagIndicator tag = [](const double* q, double, double) { return q[0]; };
  h.initialize([](double x, double y, double* q) { q[0] = blob(x, y); }, tag);
  CHECK(h.num_levels() == 3);
  const double dt = 0.5 * h.stable_dt(1.0);
  for (int s = 1; s <= 16; ++s) {
    h.advance(dt);
    if (s % 2 == 0) {
      h.regrid(tag);
      CHECK(h.boxes_disjoint());
      CHECK(h.properly_nested());
      for (int l = 1; l < h.num_levels(); ++l)
        for (const Patch& p : h.level(l).patches) {
          CHECK(p.box.width() <= 16);
          CHECK(p.box.height() <= 16);
        }
    }
  }
}

TEST_CASE("convergence: smooth two-level advection is second order") {
  std::vector<double> errs;
  for (int n : {16, 32, 64}) {
    PatchConfig c = base_config(n);
    c.cluster = {0.7, 4, 2 * n};
    PatchHierarchy h(c, uniform_wind(1.0, 0.5));
    auto f = [](double x, double y) { return 1.0 + 0.5 * std::sin(2 * kPi * (x + y)); };
    h.initialize_with_boxes([&](double x, double y, double* q) { q[0] = f(x, y); },
                            {{n / 2, n / 2, 3 * n / 2 - 1, 3 * n / 2 - 1, 1}});
    const double T = 0.25;
    const int steps = int(std::ceil(T / (0.4 / n)));
    const double dt = T / steps;
    for (int s = 0; s < steps; ++s) h.advance(dt);
    double err = 0.0;
    for (int l = 0; l < 2; ++l)
      h.for_each_leaf_cell(l, [&](double x, double y, const double* q, double vol) {
        err += std::abs(q[0] - f(x - T, y - 0.5 * T)) * vol;
      });
    errs.push_back(err);
  }
  const double p1 = std::log2(errs[0] / errs[1]), p2 = std::log2(errs[1] / errs[2]);
  MESSAGE("L1 errors " << errs[0] << " " << errs[1] << " " << errs[2] << ", orders " << p1 << " "
                       << p2);
  CHECK(p2 >= 1.9);
}

TEST_CASE("round robin: owners cycle through ranks") {
  const auto o = round_robin_assignment(7, 3);
  CHECK(o == std::vector<int>{0, 1, 2, 0, 1, 2, 0});
  CHECK(round_robin_assignment(0, 2).empty());
  CHECK_THROWS_AS(round_robin_assignment(3, 0), std::invalid_argument);
}

TEST_CASE("config validation") {
  PatchConfig c = base_config(16);
  c.cluster.blocking = 3;
  CHECK_THROWS_AS(PatchHierarchy(c, uniform_wind(1, 0)), std::invalid_argument);
  c = base_config(16);
  c.order = 5;
  CHECK_THROWS_AS(PatchHierarchy(c, uniform_wind(1, 0)), std::invalid_argument);
  c = base_config(18);
  c.cluster = {0.7, 8, 16};
  CHECK_THROWS_AS(PatchHierarchy(c, uniform_wind(1, 0)), std::invalid_argument);
  CHECK_THROWS_AS(PatchHierarchy(base_config(16), nullptr), std::invalid_argument);
}

TEST_CASE("index box calculus") {
  const IndexBox b{-3, 2, 4, 5, 1};
  CHECK(b.coarsened() == IndexBox{-2, 1, 2, 2, 0});
  CHECK(b.refined() == IndexBox{-6, 4, 9, 11, 2});
  CHECK(b.cells() == 32);
  CHECK(b.grown(1).cells() == 60);
  CHECK(IndexBox{}.empty());
  CHECK(b.intersection({0, 0, 10, 3, 1}) == IndexBox{0, 2, 4, 3, 1});
}
