#include <benchmark/benchmark.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "amrlab/cases.hpp"
#include "amrlab/dg_core.hpp"
#include "amrlab/patch_amr.hpp"

using namespace amrlab;

namespace {

// 16x16 swirl root mesh with a refined centre block so mortars are active.
struct SwirlMesh {
  MortarOperators ops;
  QuadForest forest;
  DGMesh mesh;
  AdvectionPhysics phys;
  std::vector<double> q, rhs;

  explicit SwirlMesh(int order)
      : ops(build_mortar_operators(order)),
        forest(ForestTopology::box(16, 16, false, false), 1),
        phys({WindMode{[](const Vec3& p) { return swirl_wind(p.x, p.y, 0.0, 5.0); },
                       [](double) { return 1.0; }}}) {
    std::vector<CellKey> pick;
    for (const CellKey& k : forest.leaves())
      if (k.i >= 4 && k.i < 10 && k.j >= 4 && k.j < 10) pick.push_back(k);
    forest.refine(pick);
    mesh = build_dg_mesh(forest, BoxMapping(0, 1, 0, 1), ops.basis);
    phys.bind(mesh);
    q.resize(mesh.num_nodes());
    rhs.resize(q.size());
    for (std::size_t g = 0; g < q.size(); ++g)
      q[g] = cosine_bell(std::hypot(mesh.points[g].x - 0.25, mesh.points[g].y - 0.25), 0.25, 1.0);
  }
};

void BM_StrongFormRhs(benchmark::State& st) {
  SwirlMesh m(int(st.range(0)));
  const FluxMode mode = st.range(1) == 0 ? FluxMode::kMortar : FluxMode::kPointwise;
  for (auto _ : st) {
    strong_form_rhs(m.mesh, m.ops, m.phys, mode, m.q, m.rhs);
    benchmark::DoNotOptimize(m.rhs.data());
  }
  st.SetItemsProcessed(st.iterations() * std::int64_t(m.mesh.num_nodes()));
}
BENCHMARK(BM_StrongFormRhs)->ArgsProduct({{3, 4, 7}, {0, 1}});

void BM_BuildMortarOperators(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(build_mortar_operators(int(st.range(0))));
}
BENCHMARK(BM_BuildMortarOperators)->DenseRange(1, 7, 3);

void BM_BergerRigoutsos(benchmark::State& st) {
  const int n = int(st.range(0));
  TagGrid tags(n, n);
  std::mt19937 rng(1);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double r = std::hypot(i - 0.4 * n, j - 0.55 * n);
      tags.at(i, j) = std::abs(r - 0.25 * n) < 0.06 * n || rng() % 97 == 0;
    }
  const ClusterParams p{0.8, 4, 32};
  for (auto _ : st) benchmark::DoNotOptimize(berger_rigoutsos(tags, p));
}
BENCHMARK(BM_BergerRigoutsos)->Arg(64)->Arg(256);

void BM_PatchAdvance(benchmark::State& st) {
  PatchConfig c;
  c.domain.nx = c.domain.ny = 32;
  c.cluster = {0.7, 4, 32};
  c.order = int(st.range(0));
  auto wind = std::make_shared<FvAdvection>(
      [](double x, double y, double t) { return swirl_wind(x, y, t, 5.0); });
  PatchHierarchy h(c, wind);
  h.initialize_with_boxes(
      [](double x, double y, double* q) { q[0] = cosine_bell(std::hypot(x - 0.25, y - 0.25), 0.25, 1.0); },
      {{8, 8, 31, 31, 1}});
  const double dt = 0.5 * h.stable_dt(1.0);
  for (auto _ : st) h.advance(dt);
}
BENCHMARK(BM_PatchAdvance)->DenseRange(2, 4, 1);

}  // namespace

BENCHMARK_MAIN();
