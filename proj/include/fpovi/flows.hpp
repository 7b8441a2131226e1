#pragma once

#include <functional>

#include "fpovi/kernels.hpp"

namespace fpovi {

/// The four gradient-flow direction rules. Directions are returned as
/// -v(p_i): the ascent direction added to each particle after step scaling.
enum class FlowKind { SVGD, WSGLD_B, PI_SGLD, GFSF };

FlowKind flow_from_string(const std::string& s);
std::string to_string(FlowKind k);

/// grad of K w.r.t. the second written index: pair_grad(i, j) = grad_{p_j} K_ij.
/// Abstracted so weight-space flows with function-value/activation kernels can
/// route the kernel gradient through backprop.
using PairGrad = std::function<Vector(int i, int j)>;

/// Generic entry point: K is the n x n gram, grads holds the n per-particle
/// log-density gradients (one per row, in the direction space).
Matrix flow_directions(FlowKind kind, const Matrix& K, const Matrix& grads,
                       const PairGrad& pair_grad, double gfsf_ridge = -1.0);

/// RBF specialization driven by a GramPack.
Matrix flow_directions(FlowKind kind, const GramPack& gram, const Matrix& grads,
                       double gfsf_ridge = -1.0);

Matrix svgd_direction(const GramPack& gram, const Matrix& grads);
Matrix wsgld_b_direction(const GramPack& gram, const Matrix& grads);
Matrix pi_sgld_direction(const GramPack& gram, const Matrix& grads);
Matrix gfsf_direction(const GramPack& gram, const Matrix& grads, double ridge = -1.0);

}  // namespace fpovi
