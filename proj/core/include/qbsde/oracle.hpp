#pragma once

#include "qbsde/models.hpp"

#include <span>
#include <string>
#include <vector>

namespace qbsde {

/// Quadrature rule for the standard normal density: sum_k w_k f(x_k) ~
/// E[f(Z)], weights summing to 1.
struct NormalRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Probabilists' Gauss-Hermite rule. Nodes and weights come from the
/// eigen-decomposition of the Jacobi matrix of the Hermite recurrence.
/// Throws Error for count < 1.
NormalRule gauss_hermite(int count);

/// Composite 8-point Gauss-Legendre rule on [-z_max, z_max] with weights
/// multiplied by the normal density and renormalized. Uses count / 8 equal
/// panels. Resolves integrands that oscillate in the tails, where
/// Gauss-Hermite nodes are sparse. Throws Error for count < 8.
NormalRule composite_legendre(int count, double z_max = 8.0);

enum class QuadratureKind { gauss_hermite, composite_legendre };

std::string to_string(QuadratureKind kind);

/// Inputs of the closed-form reference
///   Y_0 = (1/a) log E[exp(a g(X_T))],  X_T^l = x0^l exp(-nu^2 T / 2 + nu W_T^l).
struct ReferenceSpec {
    double a = 1.0;
    double nu = 1.0;
    std::vector<double> x0;
    ScalarFieldFn g;
    double T = 1.0;
    int nodes_per_dim = 64;
    QuadratureKind kind = QuadratureKind::gauss_hermite;
};

/// Reference spec of a problem in the Cole-Hopf family. Throws Error if the
/// problem is not in the family.
ReferenceSpec reference_spec(const Problem& problem, int nodes_per_dim = 64);

/// Tensor-rule evaluation with exactly spec.nodes_per_dim nodes per
/// dimension.
double cole_hopf_quadrature(const ReferenceSpec& spec);

struct ReferenceValue {
    double y0 = 0.0;
    /// Node count per dimension of the returned value.
    int nodes_per_dim = 0;
    /// |value(nodes) - value(nodes / 2)| at the final escalation level.
    double gap = 0.0;
    bool converged = false;
    QuadratureKind kind = QuadratureKind::gauss_hermite;
};

/// Total tensor nodes the composite stage of cole_hopf_y0 may use.
inline constexpr double kMaxTensorNodes = 1u << 27;
inline constexpr double kMaxCompositeNodesPerDim = 1u << 16;

/// Evaluates with spec.kind at nodes_per_dim and doubles the node count until
/// two successive values agree to within tolerance or max_nodes is reached.
/// If that fails, repeats the doubling with the composite rule from 256 nodes
/// per dimension while the tensor size stays within kMaxTensorNodes (and the
/// per-dimension count within kMaxCompositeNodesPerDim), and
/// returns whichever stage ended with the smaller gap. converged is false when
/// neither stage met the tolerance.
ReferenceValue cole_hopf_y0(const ReferenceSpec& spec, double tolerance = 1e-6,
                            int max_nodes = 512);

struct QuadratureCheck {
    double value_m = 0.0;
    double value_2m = 0.0;
    double gap = 0.0;
};

/// Values at nodes_per_dim and twice that, and their gap.
QuadratureCheck quadrature_self_check(const ReferenceSpec& spec);

}  // namespace qbsde
