#pragma once

// Coupling across 2:1 faces and solution transfer between parents and
// children. The face routines work on nodal traces laid out [var][node],
// fine traces already reordered into the coarse along-face order.

#include <array>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "amrlab/tensor_basis.hpp"
#include "amrlab/tree_mesh.hpp"

namespace amrlab {

struct MortarOperators {
  NodalBasis basis;
  ProjectionSet proj;
  // Flux back-projection M^-1 S_i^T (no scale factor) per half.
  std::array<DenseMatrix, 2> back;
  // Pointwise baseline: coarse node j <- fine half trace, and the half it
  // reads from (-1 marks the shared midpoint, averaged over both halves).
  std::array<DenseMatrix, 2> coarse_from_fine;
  std::vector<int> coarse_node_half;

  int np() const { return basis.size(); }
};

MortarOperators build_mortar_operators(int order);

enum class FluxMode { kMortar, kPointwise, kLinearized };

const char* to_string(FluxMode mode);
FluxMode flux_mode_from_string(const std::string& name);

/// Where a numerical flux is evaluated: on mortar/fine node `node` of half
/// `half`, or (pointwise baseline only) on coarse node `node` with half = -1.
struct FacePoint {
  int half;
  int node;
  bool coarse_geometry() const { return half < 0; }
};

// Flux callbacks return the flux leaving the coarse element, integrated
// against the local face metric (fine metric on mortars, coarse metric on
// coarse nodes).
using FaceFluxFn =
    std::function<void(const double* q_coarse, const double* q_fine, FacePoint p, double* g)>;
using NormalVelocityFn = std::function<double(FacePoint p)>;

struct FaceContributions {
  std::vector<double> coarse;             // [var][np], leaving the coarse side
  std::array<std::vector<double>, 2> fine;  // [var][np], leaving each fine side
};

/// Project the coarse trace onto both mortars (fine traces map by identity),
/// evaluate the flux there and project it back onto the coarse face.
FaceContributions mortar_face_flux(const MortarOperators& ops, int nvars,
                                   std::span<const double> coarse_trace,
                                   std::array<std::span<const double>, 2> fine_traces,
                                   const FaceFluxFn& flux);

/// Node-to-node interpolation baseline; not conservative.
FaceContributions pointwise_face_flux(const MortarOperators& ops, int nvars,
                                      std::span<const double> coarse_trace,
                                      std::array<std::span<const double>, 2> fine_traces,
                                      const FaceFluxFn& flux);

/// Upwind flux as (lagged mass flux) x (upwind state); the coarse side
/// multiplies separately projected factors. Single advected scalar only;
/// throws std::invalid_argument for nvars != 1.
FaceContributions linearized_advective_flux(const MortarOperators& ops, int nvars,
                                            std::span<const double> coarse_trace,
                                            std::array<std::span<const double>, 2> fine_traces,
                                            const NormalVelocityFn& normal_velocity);

/// Tensor-product parent -> child c (c = cx + 2 cy) for one variable.
void refine_tensor(const MortarOperators& ops, int child, std::span<const double> parent,
                   std::span<double> out);
/// Accumulates the child's contribution to the parent (one variable).
void coarsen_tensor_add(const MortarOperators& ops, int child, std::span<const double> child_data,
                        std::span<double> parent);

/// Parent data [var][node] -> four children [var][node].
std::array<std::vector<double>, 4> transfer_refine(const MortarOperators& ops, int nvars,
                                                   std::span<const double> parent);
std::vector<double> transfer_coarsen(const MortarOperators& ops, int nvars,
                                     std::array<std::span<const double>, 4> children);

/// Volume-weighted finite-volume restriction.
double fv_coarsen(std::span<const double> values, std::span<const double> volumes);

enum class RescaleMode { kPerField, kSingleFactor };

struct RescaleResult {
  double max_relative_mismatch = 0.0;  // before the correction
  bool additive_fallback = false;
};

/// Correct `target` ([var][node] blocks listed in `target_blocks`, node
/// weights w_i w_j J in `target_weights`) so that its integral of every
/// variable equals `reference_integrals`. Multiplicative where safe, additive
/// when the integrals are tiny or of mixed sign.
RescaleResult rescale_to_integrals(int nvars, std::span<const double> reference_integrals,
                                   std::span<const std::span<double>> target_blocks,
                                   std::span<const std::span<const double>> target_weights,
                                   RescaleMode mode);

/// LeafTransfer for nodal dG data. When `node_weights` is set (curved
/// elements) each refine/coarsen event is rescaled so integrals match.
class DGLeafTransfer : public LeafTransfer {
 public:
  using WeightFn = std::function<std::vector<double>(const CellKey&)>;

  DGLeafTransfer(const MortarOperators& ops, int nvars, WeightFn node_weights = {},
                 RescaleMode mode = RescaleMode::kPerField)
      : ops_(ops), nvars_(nvars), weights_(std::move(node_weights)), mode_(mode) {}

  std::size_t values_per_leaf() const override {
    return std::size_t(nvars_) * ops_.np() * ops_.np();
  }
  void refine(const CellKey& parent, std::span<const double> parent_data,
              std::array<std::span<double>, 4> children) override;
  void coarsen(const CellKey& parent, std::array<std::span<const double>, 4> children,
               std::span<double> parent_data) override;

  double max_mismatch() const { return max_mismatch_; }
  int fallbacks() const { return fallbacks_; }

 private:
  std::vector<double> integrals(std::span<const double> data,
                                const std::vector<double>& w) const;

  const MortarOperators& ops_;
  int nvars_;
  WeightFn weights_;
  RescaleMode mode_;
  double max_mismatch_ = 0.0;
  int fallbacks_ = 0;
};

}  // namespace amrlab
