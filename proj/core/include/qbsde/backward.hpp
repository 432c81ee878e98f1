#pragma once

#include "qbsde/driver.hpp"
#include "qbsde/forward.hpp"
#include "qbsde/lattice.hpp"
#include "qbsde/models.hpp"
#include "qbsde/quantizer.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qbsde {

/// How conditional expectations are evaluated.
///   general: enumerate every quantizer node at every lattice point.
///   axis:    contract one axis at a time; needs per-axis coefficients and a
///            product grid, and costs O(d m) instead of O(m^d) per point.
enum class KernelChoice { automatic, general, axis };

struct SchemeParams {
    int n = 10;
    /// Target total quantizer size; per-axis count m = round(M^(1/d)).
    int M = 100;
    double delta = 0.05;
    int kappa = 100;
    TruncationPolicy truncation = TruncationPolicy::adaptive(0.25);
    double picard_tol = 1e-12;
    int picard_max_iters = 50;
    int workers = 1;
    /// Keep u and v at every time step (visualization only).
    bool keep_fields = false;
    KernelChoice kernel = KernelChoice::automatic;

    int per_dim_points(int d) const;
};

/// Lattice defaults of the problem with a requested n.
SchemeParams default_params(const Problem& problem, int n);

/// Grid sizes from the asymptotic schedule delta = n^-3/2,
/// kappa = n^(3/2 + eta), M = n^((1 + alpha) d). Impractically large beyond
/// toy n; exposed for completeness.
SchemeParams theoretical_params(const Problem& problem, int n, double alpha, double eta);

/// u^pi(t_i, .) and v^pi(t_i, .) over the lattice; v is stored row-major
/// (d entries per lattice point).
struct ValueField {
    int time_index = 0;
    int dim = 1;
    std::vector<double> u;
    std::vector<double> v;

    std::span<const double> v_at(std::size_t index) const {
        return {v.data() + index * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
};

/// A non-finite value appeared in a field.
class NonFiniteFieldError : public NumericalError {
public:
    NonFiniteFieldError(int time_index, std::size_t point_index, std::vector<double> point);
    int time_index;
    std::size_t point_index;
    std::vector<double> point;
};

struct PicardResult {
    double value = 0.0;
    int iterations = 0;
};

/// Fixed point of y -> e + h f(x, y, v), stopping when the update is below
/// tol (1 + |y|). One evaluation when f does not depend on y.
/// Throws NumericalError if h K_y >= 1 or max_iters is exceeded.
PicardResult picard_solve(double y_guess, double e, std::span<const double> x,
                          std::span<const double> v, const Driver& f, double h, double tol,
                          int max_iters);

enum class NonFinitePolicy { raise, record };

/// Everything a backward step needs, resolved once per solve.
class BackwardScheme {
public:
    BackwardScheme(const Problem& problem, const SchemeParams& params);

    const Problem& problem() const { return problem_; }
    const SchemeParams& params() const { return params_; }
    const Lattice& lattice() const { return lattice_; }
    const QuantGridD& grid() const { return grid_; }
    const TimeGrid& time_grid() const { return time_grid_; }
    const TruncationLevels& levels() const { return levels_; }
    const Driver& truncated_driver() const { return driver_; }
    double truncation_radius() const { return radius_; }
    bool uses_axis_kernel() const { return use_axis_; }

    /// u = g, v = 0 at t_n.
    ValueField terminal_field() const;

    /// Field at t_i from the field at t_{i+1}.
    ValueField step(const ValueField& next, NonFinitePolicy policy = NonFinitePolicy::raise) const;

    struct StepStats {
        int max_picard_iterations = 0;
        std::optional<std::size_t> first_non_finite;
    };
    const StepStats& last_step_stats() const { return last_stats_; }

private:
    void expectations_general(const ValueField& next, int i, std::vector<double>& e,
                              std::vector<double>& v) const;
    void expectations_axis(const ValueField& next, int i, std::vector<double>& e,
                           std::vector<double>& v) const;

    Problem problem_;
    SchemeParams params_;
    Lattice lattice_;
    QuantGridD grid_;
    TimeGrid time_grid_;
    TruncationLevels levels_;
    Driver driver_;
    double radius_;
    bool use_axis_;
    mutable StepStats last_stats_;
};

/// Computes the field at t_i from the one at t_{i+1}.
ValueField backward_step(const BackwardScheme& scheme, const ValueField& next);

struct SolveDiagnostics {
    StabilityReport stability;
    TruncationLevels levels;
    double truncation_radius = 0.0;
    bool radius_degenerate = false;
    int per_dim_points = 0;
    std::size_t lattice_points = 0;
    std::string kernel;
    /// sup_x |u(t_i, x)| for i = 0..n.
    std::vector<double> sup_abs_u;
    int max_picard_iterations = 0;
    bool diverged = false;
    /// First step/point where a non-finite value appeared, if any.
    std::optional<int> non_finite_step;
    std::optional<std::vector<double>> non_finite_point;
};

struct SolveResult {
    double y0 = 0.0;
    std::vector<double> z0;
    SchemeParams params;
    /// Fields at t_0..t_n when params.keep_fields is set.
    std::vector<ValueField> fields;
    SolveDiagnostics diagnostics;
    double runtime_ms = 0.0;
};

/// Runs the backward induction from t_n down to t_0 and reads off
/// (u, v)(t_0, X0). Non-finite values do not raise: they mark the result as
/// diverged.
SolveResult solve(const Problem& problem, const SchemeParams& params);

/// JSON document with keys y0, z0, n, alpha, M, delta, kappa, truncation,
/// diagnostics, runtime_ms.
std::string to_json(const SolveResult& result, const Problem& problem);

/// Same scheme evaluated by explicit recursion over the quantized path tree,
/// without lattice tables. Throws Error if the tree has more than max_nodes
/// leaves.
double naive_recursive_oracle(const Problem& problem, const SchemeParams& params,
                              std::size_t max_nodes = 20'000'000);

}  // namespace qbsde
