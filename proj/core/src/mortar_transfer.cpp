#include "amrlab/mortar_transfer.hpp"

#include <cmath>
#include <string>

namespace amrlab {

MortarOperators build_mortar_operators(int order) {
  MortarOperators ops;
  ops.basis = lgl_nodes_and_weights(order);
  ops.proj = build_projection_set(ops.basis);
  const int np = ops.np();
  for (int h = 0; h < 2; ++h) ops.back[h] = ops.proj.child_to_parent[h] * (1.0 / ops.proj.scale_factors[h]);

  ops.coarse_from_fine = {DenseMatrix(np, np), DenseMatrix(np, np)};
  ops.coarse_node_half.assign(np, 0);
  for (int j = 0; j < np; ++j) {
    const double x = ops.basis.nodes[j];
    if (std::abs(x) < 1e-14) {
      ops.coarse_node_half[j] = -1;
      const auto lo = lagrange_values(ops.basis.nodes, 1.0);
      const auto hi = lagrange_values(ops.basis.nodes, -1.0);
      for (int k = 0; k < np; ++k) {
        ops.coarse_from_fine[0](j, k) = lo[k];
        ops.coarse_from_fine[1](j, k) = hi[k];
      }
    } else {
      const int h = x < 0.0 ? 0 : 1;
      ops.coarse_node_half[j] = h;
      const double xi = h == 0 ? 2.0 * x + 1.0 : 2.0 * x - 1.0;
      const auto l = lagrange_values(ops.basis.nodes, xi);
      for (int k = 0; k < np; ++k) ops.coarse_from_fine[h](j, k) = l[k];
    }
  }
  return ops;
}

const char* to_string(FluxMode mode) {
  switch (mode) {
    case FluxMode::kMortar: return "mortar";
    case FluxMode::kPointwise: return "pointwise";
    default: return "linearized";
  }
}

FluxMode flux_mode_from_string(const std::string& name) {
  if (name == "mortar") return FluxMode::kMortar;
  if (name == "pointwise") return FluxMode::kPointwise;
  if (name == "linearized") return FluxMode::kLinearized;
  throw std::invalid_argument("unknown flux mode '" + name + "'");
}

namespace {

void check_sizes(const MortarOperators& ops, int nvars, std::span<const double> c,
                 std::array<std::span<const double>, 2> f) {
  const std::size_t n = std::size_t(nvars) * ops.np();
  if (c.size() != n || f[0].size() != n || f[1].size() != n)
    throw std::invalid_argument("face flux: trace size mismatch");
}

// out[v][k] = sum_j m[k][j] in[v][j]
void apply_per_var(const DenseMatrix& m, int nvars, int np, const double* in, double* out) {
  for (int v = 0; v < nvars; ++v)
    for (int k = 0; k < np; ++k) {
      double s = 0.0;
      for (int j = 0; j < np; ++j) s += m(k, j) * in[v * np + j];
      out[v * np + k] = s;
    }
}

}  // namespace

FaceContributions mortar_face_flux(const MortarOperators& ops, int nvars,
                                   std::span<const double> coarse_trace,
                                   std::array<std::span<const double>, 2> fine_traces,
                                   const FaceFluxFn& flux) {
  check_sizes(ops, nvars, coarse_trace, fine_traces);
  const int np = ops.np();
  FaceContributions out;
  out.coarse.assign(std::size_t(nvars) * np, 0.0);
  std::vector<double> projected(std::size_t(nvars) * np), g_mortar(std::size_t(nvars) * np);
  std::vector<double> qc(nvars), qf(nvars), g(nvars);
  for (int h = 0; h < 2; ++h) {
    apply_per_var(ops.proj.parent_to_child[h], nvars, np, coarse_trace.data(), projected.data());
    out.fine[h].assign(std::size_t(nvars) * np, 0.0);
    for (int k = 0; k < np; ++k) {
      for (int v = 0; v < nvars; ++v) {
        qc[v] = projected[v * np + k];
        qf[v] = fine_traces[h][v * np + k];
      }
      flux(qc.data(), qf.data(), FacePoint{h, k}, g.data());
      for (int v = 0; v < nvars; ++v) {
        g_mortar[v * np + k] = g[v];
        out.fine[h][v * np + k] = -g[v];
      }
    }
    for (int v = 0; v < nvars; ++v)
      for (int j = 0; j < np; ++j) {
        double s = 0.0;
        for (int k = 0; k < np; ++k) s += ops.back[h](j, k) * g_mortar[v * np + k];
        out.coarse[v * np + j] += s;
      }
  }
  return out;
}

FaceContributions pointwise_face_flux(const MortarOperators& ops, int nvars,
                                      std::span<const double> coarse_trace,
                                      std::array<std::span<const double>, 2> fine_traces,
                                      const FaceFluxFn& flux) {
  check_sizes(ops, nvars, coarse_trace, fine_traces);
  const int np = ops.np();
  FaceContributions out;
  out.coarse.assign(std::size_t(nvars) * np, 0.0);
  std::vector<double> projected(std::size_t(nvars) * np);
  std::vector<double> qc(nvars), qf(nvars), g(nvars);
  for (int h = 0; h < 2; ++h) {
    // Fine nodes read the coarse polynomial at their own locations.
    apply_per_var(ops.proj.parent_to_child[h], nvars, np, coarse_trace.data(), projected.data());
    out.fine[h].assign(std::size_t(nvars) * np, 0.0);
    for (int k = 0; k < np; ++k) {
      for (int v = 0; v < nvars; ++v) {
        qc[v] = projected[v * np + k];
        qf[v] = fine_traces[h][v * np + k];
      }
      flux(qc.data(), qf.data(), FacePoint{h, k}, g.data());
      for (int v = 0; v < nvars; ++v) out.fine[h][v * np + k] = -g[v];
    }
  }
  for (int j = 0; j < np; ++j) {
    const int h = ops.coarse_node_half[j];
    for (int v = 0; v < nvars; ++v) {
      qc[v] = coarse_trace[v * np + j];
      double s = 0.0;
      if (h >= 0) {
        for (int k = 0; k < np; ++k) s += ops.coarse_from_fine[h](j, k) * fine_traces[h][v * np + k];
      } else {
        for (int hh = 0; hh < 2; ++hh)
          for (int k = 0; k < np; ++k)
            s += 0.5 * ops.coarse_from_fine[hh](j, k) * fine_traces[hh][v * np + k];
      }
      qf[v] = s;
    }
    flux(qc.data(), qf.data(), FacePoint{-1, j}, g.data());
    for (int v = 0; v < nvars; ++v) out.coarse[v * np + j] = g[v];
  }
  return out;
}

FaceContributions linearized_advective_flux(const MortarOperators& ops, int nvars,
                                            std::span<const double> coarse_trace,
                                            std::array<std::span<const double>, 2> fine_traces,
                                            const NormalVelocityFn& normal_velocity) {
  if (nvars != 1)
    throw std::invalid_argument("linearized_advective_flux: advection mode (one scalar) only");
  check_sizes(ops, nvars, coarse_trace, fine_traces);
  const int np = ops.np();
  FaceContributions out;
  std::vector<double> projected(np), mass_flux(np, 0.0), upwind_state(np, 0.0);
  std::vector<double> gm(np), qs(np);
  for (int h = 0; h < 2; ++h) {
    apply_per_var(ops.proj.parent_to_child[h], 1, np, coarse_trace.data(), projected.data());
    out.fine[h].assign(np, 0.0);
    for (int k = 0; k < np; ++k) {
      const double un = normal_velocity(FacePoint{h, k});
      const double q = un >= 0.0 ? projected[k] : fine_traces[h][k];
      gm[k] = un;
      qs[k] = q;
      out.fine[h][k] = -un * q;
    }
    const double s = ops.proj.scale_factors[h];
    for (int j = 0; j < np; ++j) {
      double a = 0.0, b = 0.0;
      for (int k = 0; k < np; ++k) {
        a += ops.back[h](j, k) * gm[k];
        b += s * ops.back[h](j, k) * qs[k];
      }
      mass_flux[j] += a;
      upwind_state[j] += b;
    }
  }
  out.coarse.resize(np);
  for (int j = 0; j < np; ++j) out.coarse[j] = mass_flux[j] * upwind_state[j];
  return out;
}

void refine_tensor(const MortarOperators& ops, int child, std::span<const double> parent,
                   std::span<double> out) {
  const int np = ops.np();
  const DenseMatrix& px = ops.proj.parent_to_child[child & 1];
  const DenseMatrix& py = ops.proj.parent_to_child[child >> 1];
  std::vector<double> tmp(std::size_t(np) * np);
  // Along xi first: tmp[i + np b] = sum_a px[i][a] parent[a + np b].
  for (int b = 0; b < np; ++b)
    for (int i = 0; i < np; ++i) {
      double s = 0.0;
      for (int a = 0; a < np; ++a) s += px(i, a) * parent[a + np * b];
      tmp[i + np * b] = s;
    }
  for (int j = 0; j < np; ++j)
    for (int i = 0; i < np; ++i) {
      double s = 0.0;
      for (int b = 0; b < np; ++b) s += py(j, b) * tmp[i + np * b];
      out[i + np * j] = s;
    }
}

void coarsen_tensor_add(const MortarOperators& ops, int child, std::span<const double> child_data,
                        std::span<double> parent) {
  const int np = ops.np();
  const DenseMatrix& cx = ops.proj.child_to_parent[child & 1];
  const DenseMatrix& cy = ops.proj.child_to_parent[child >> 1];
  std::vector<double> tmp(std::size_t(np) * np);
  for (int j = 0; j < np; ++j)
    for (int a = 0; a < np; ++a) {
      double s = 0.0;
      for (int i = 0; i < np; ++i) s += cx(a, i) * child_data[i + np * j];
      tmp[a + np * j] = s;
    }
  for (int b = 0; b < np; ++b)
    for (int a = 0; a < np; ++a) {
      double s = 0.0;
      for (int j = 0; j < np; ++j) s += cy(b, j) * tmp[a + np * j];
      parent[a + np * b] += s;
    }
}

std::array<std::vector<double>, 4> transfer_refine(const MortarOperators& ops, int nvars,
                                                   std::span<const double> parent) {
  const std::size_t nn = std::size_t(ops.np()) * ops.np();
  if (parent.size() != nn * nvars) throw std::invalid_argument("transfer_refine: size mismatch");
  std::array<std::vector<double>, 4> kids;
  for (int c = 0; c < 4; ++c) {
    kids[c].assign(nn * nvars, 0.0);
    for (int v = 0; v < nvars; ++v)
      refine_tensor(ops, c, parent.subspan(v * nn, nn), std::span<double>(kids[c]).subspan(v * nn, nn));
  }
  return kids;
}

std::vector<double> transfer_coarsen(const MortarOperators& ops, int nvars,
                                     std::array<std::span<const double>, 4> children) {
  const std::size_t nn = std::size_t(ops.np()) * ops.np();
  std::vector<double> parent(nn * nvars, 0.0);
  for (int c = 0; c < 4; ++c) {
    if (children[c].size() != nn * nvars)
      throw std::invalid_argument("transfer_coarsen: size mismatch");
    for (int v = 0; v < nvars; ++v)
      coarsen_tensor_add(ops, c, children[c].subspan(v * nn, nn),
                         std::span<double>(parent).subspan(v * nn, nn));
  }
  return parent;
}

double fv_coarsen(std::span<const double> values, std::span<const double> volumes) {
  if (values.size() != volumes.size() || values.empty())
    throw std::invalid_argument("fv_coarsen: values and volumes must match");
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    num += values[k] * volumes[k];
    den += volumes[k];
  }
  if (!(den > 0.0)) throw std::invalid_argument("fv_coarsen: volumes must be positive");
  return num / den;
}

RescaleResult rescale_to_integrals(int nvars, std::span<const double> reference,
                                   std::span<const std::span<double>> blocks,
                                   std::span<const std::span<const double>> weights,
                                   RescaleMode mode) {
  if (blocks.size() != weights.size())
    throw std::invalid_argument("rescale_to_integrals: one weight set per block");
  RescaleResult result;
  std::vector<double> integral(nvars, 0.0), magnitude(nvars, 0.0);
  double measure = 0.0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::size_t nn = weights[b].size();
    for (std::size_t k = 0; k < nn; ++k) measure += weights[b][k];
    for (int v = 0; v < nvars; ++v)
      for (std::size_t k = 0; k < nn; ++k) {
        const double x = weights[b][k] * blocks[b][v * nn + k];
        integral[v] += x;
        magnitude[v] += std::abs(x);
      }
  }
  auto factor_ok = [&](int v) {
    if (!(magnitude[v] > 0.0)) return false;
    if (std::abs(integral[v]) < 1e-8 * magnitude[v]) return false;  // mixed sign or tiny
    const double f = reference[v] / integral[v];
    return f > 0.5 && f < 2.0;
  };
  std::vector<double> factor(nvars, 1.0);
  std::vector<char> additive(nvars, 0);
  for (int v = 0; v < nvars; ++v) {
    const double denom = std::max(std::abs(reference[v]), magnitude[v]);
    if (denom > 0.0)
      result.max_relative_mismatch =
          std::max(result.max_relative_mismatch, std::abs(integral[v] - reference[v]) / denom);
  }
  if (mode == RescaleMode::kSingleFactor && factor_ok(0)) {
    std::fill(factor.begin(), factor.end(), reference[0] / integral[0]);
  } else {
    for (int v = 0; v < nvars; ++v) {
      if (integral[v] == reference[v]) continue;
      if (factor_ok(v)) {
        factor[v] = reference[v] / integral[v];
      } else if (magnitude[v] > 0.0 || reference[v] != 0.0) {
        additive[v] = 1;
        result.additive_fallback = true;
      }
    }
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::size_t nn = weights[b].size();
    for (int v = 0; v < nvars; ++v) {
      if (additive[v]) {
        const double delta = (reference[v] - integral[v]) / measure;
        for (std::size_t k = 0; k < nn; ++k) blocks[b][v * nn + k] += delta;
      } else if (factor[v] != 1.0) {
        for (std::size_t k = 0; k < nn; ++k) blocks[b][v * nn + k] *= factor[v];
      }
    }
  }
  return result;
}

std::vector<double> DGLeafTransfer::integrals(std::span<const double> data,
                                              const std::vector<double>& w) const {
  const std::size_t nn = w.size();
  std::vector<double> out(nvars_, 0.0);
  for (int v = 0; v < nvars_; ++v)
    for (std::size_t k = 0; k < nn; ++k) out[v] += w[k] * data[v * nn + k];
  return out;
}

void DGLeafTransfer::refine(const CellKey& parent, std::span<const double> parent_data,
                            std::array<std::span<double>, 4> children) {
  const std::size_t nn = std::size_t(ops_.np()) * ops_.np();
  for (int c = 0; c < 4; ++c)
    for (int v = 0; v < nvars_; ++v)
      refine_tensor(ops_, c, parent_data.subspan(v * nn, nn), children[c].subspan(v * nn, nn));
  if (!weights_) return;
  const auto ref = integrals(parent_data, weights_(parent));
  std::array<std::vector<double>, 4> w;
  for (int c = 0; c < 4; ++c) w[c] = weights_(parent.child(c));
  const std::array<std::span<const double>, 4> wspans{w[0], w[1], w[2], w[3]};
  const auto r = rescale_to_integrals(nvars_, ref, children, wspans, mode_);
  max_mismatch_ = std::max(max_mismatch_, r.max_relative_mismatch);
  fallbacks_ += r.additive_fallback;
}

void DGLeafTransfer::coarsen(const CellKey& parent, std::array<std::span<const double>, 4> children,
                             std::span<double> parent_data) {
  const std::size_t nn = std::size_t(ops_.np()) * ops_.np();
  std::fill(parent_data.begin(), parent_data.end(), 0.0);
  for (int c = 0; c < 4; ++c)
    for (int v = 0; v < nvars_; ++v)
      coarsen_tensor_add(ops_, c, children[c].subspan(v * nn, nn), parent_data.subspan(v * nn, nn));
  if (!weights_) return;
  std::vector<double> ref(nvars_, 0.0);
  for (int c = 0; c < 4; ++c) {
    const auto part = integrals(children[c], weights_(parent.child(c)));
    for (int v = 0; v < nvars_; ++v) ref[v] += part[v];
  }
  const auto wp = weights_(parent);
  const std::array<std::span<double>, 1> blocks{parent_data};
  const std::array<std::span<const double>, 1> wspans{wp};
  const auto r = rescale_to_integrals(nvars_, ref, blocks, wspans, mode_);
  max_mismatch_ = std::max(max_mismatch_, r.max_relative_mismatch);
  fallbacks_ += r.additive_fallback;
}

}  // namespace amrlab
