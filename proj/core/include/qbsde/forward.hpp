#pragma once

#include "qbsde/lattice.hpp"
#include "qbsde/quantizer.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace qbsde {

/// out = F(x); sizes are fixed by the owning SdeCoeffs.
using VectorFieldFn = std::function<void(std::span<const double> x, std::span<double> out)>;

/// Coefficients whose drift b^j and diagonal volatility sigma^jj depend on
/// x^j only, with sigma diagonal. Enables per-axis transition tables.
struct AxisCoeffs {
    std::vector<std::function<double(double)>> drift;
    std::vector<std::function<double(double)>> vol;
};

/// dX = b(X) dt + sigma(X) dW in dimension d.
struct SdeCoeffs {
    int dim = 1;
    /// b(x), written into a d-vector.
    VectorFieldFn drift;
    /// sigma(x), written row-major into a d*d buffer.
    VectorFieldFn diffusion;
    double lipschitz_K = 0.0;
    std::optional<AxisCoeffs> axis;
};

/// Builds both the full and the per-axis representation.
SdeCoeffs axis_coeffs(AxisCoeffs axis, double lipschitz_K);

/// Independent geometric Brownian motions dX^l = nu X^l dW^l.
SdeCoeffs gbm_coeffs(int d, double nu);

/// Uniform time grid t_i = i T / n.
class TimeGrid {
public:
    TimeGrid(int n, double T);
    int steps() const { return n_; }
    double horizon() const { return T_; }
    double step(int i) const;
    double time(int i) const;
    const std::vector<double>& times() const { return times_; }

private:
    int n_;
    double T_;
    std::vector<double> times_;
};

/// x + h b(x) + sigma(x) dw.
std::vector<double> euler_step(const SdeCoeffs& coeffs, std::span<const double> x, double h,
                               std::span<const double> dw);

/// Projection onto the lattice of the Euler step driven by a quantized
/// increment.
std::vector<double> discrete_euler_step(const SdeCoeffs& coeffs, const Lattice& lattice,
                                        std::span<const double> x, double h,
                                        std::span<const double> dw_hat);

/// One quantizer node's contribution to a conditional expectation.
struct Transition {
    std::size_t successor;
    double weight;
    /// Clamped increment weight H = clamp(g_k / sqrt(h), R / sqrt(h)).
    std::vector<double> h_weight;
};

/// Successors Pi(x + h b(x) + sqrt(h) sigma(x) g_k) of lattice point x over
/// every node g_k of grid, in grid order. R = +inf disables the clamp.
std::vector<Transition> transition_support(const SdeCoeffs& coeffs, const Lattice& lattice,
                                           const QuantGridD& grid, std::span<const double> x,
                                           double h,
                                           double R = std::numeric_limits<double>::infinity());

/// Counter-based generator: the value for (seed, stream, counter) is the
/// SplitMix64 finalizer applied to a Weyl combination of the three keys, so
/// any variate can be regenerated independently of evaluation order.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}
    std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const;
    /// Uniform on the open interval (0, 1).
    double uniform(std::uint64_t stream, std::uint64_t counter) const;
    /// Standard normal via the inverse CDF.
    double normal(std::uint64_t stream, std::uint64_t counter) const;

private:
    std::uint64_t seed_;
};

struct PathStatistics {
    std::size_t count = 0;
    /// Sample mean of X_T, per coordinate.
    std::vector<double> terminal_mean;
    /// Sample standard deviation of X_T, per coordinate.
    std::vector<double> terminal_stddev;
    /// Sample mean of max_i |X_i|^2 over the path.
    double mean_sup_squared_norm = 0.0;
};

/// Seeded Euler ensemble; path p uses generator stream p, so the result does
/// not depend on the number of workers.
PathStatistics simulate_paths(const SdeCoeffs& coeffs, int n, double T,
                              std::span<const double> x0, std::size_t count,
                              std::uint64_t seed, int workers = 1);

struct CoupledGapStatistics {
    /// Sample mean of max_k |X_k - X~_k|.
    double mean_sup_gap = 0.0;
    /// |X_0 - X~_0| + sample mean of sum_j |zeta_j|.
    double mean_perturbation = 0.0;
    /// mean_sup_gap / mean_perturbation.
    double stability_constant = 0.0;
};

/// Per-step perturbation zeta_j (d-vector) for path p at step j.
using PerturbationFn =
    std::function<void(std::size_t path, int step, double h, std::span<double> zeta)>;

/// Runs X and X~ on the same Gaussian increments, X~ started at x0_tilde and
/// shifted by zeta_j after every step.
CoupledGapStatistics coupled_euler_gap(const SdeCoeffs& coeffs, int n, double T,
                                       std::span<const double> x0,
                                       std::span<const double> x0_tilde,
                                       const PerturbationFn& zeta, std::size_t count,
                                       std::uint64_t seed);

}  // namespace qbsde
