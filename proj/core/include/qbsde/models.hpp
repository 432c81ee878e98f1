#pragma once

#include "qbsde/driver.hpp"
#include "qbsde/forward.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qbsde {

using ScalarFieldFn = std::function<double(std::span<const double>)>;

/// Bounded Lipschitz terminal function g with its recorded constants.
struct TerminalCondition {
    ScalarFieldFn eval;
    /// sup |g| over the state space of the forward process.
    double sup_norm = 0.0;
    double lipschitz = 0.0;

    double operator()(std::span<const double> x) const { return eval(x); }
};

/// Parameters of the closed-form reference: driver (a/2)|z|^2 and
/// independent GBM coordinates with volatility nu.
struct ColeHopfParams {
    double a = 0.0;
    double nu = 0.0;
};

/// Lattice and quantizer sizes used by an experiment unless overridden.
struct LatticeDefaults {
    double delta = 0.05;
    int kappa = 100;
    int M = 100;
};

/// Markovian quadratic BSDE: forward SDE, driver, terminal condition.
struct Problem {
    std::string name;
    int dim = 1;
    SdeCoeffs coeffs;
    Driver driver;
    TerminalCondition g;
    double T = 1.0;
    std::vector<double> x0;
    std::optional<ColeHopfParams> cole_hopf;
    LatticeDefaults defaults;
};

/// Names accepted by builtin().
std::vector<std::string> builtin_names();

/// Registered experiment models: d1_alpha, d2_fig1, d2_fig2, model_I,
/// model_II, model_III, model_IV. Throws Error for unknown names.
Problem builtin(const std::string& name);

/// Terminal functions of the registered models.
double g_sum_sin_squared(std::span<const double> x);  // 3 sum sin^2(x^l)
double g_sin_squared_of_sum(std::span<const double> x);  // 3 sin^2(sum x^l)
double g_atan_of_sum(std::span<const double> x);  // 4 atan(sum x^l)
double g_capped_spread(std::span<const double> x);  // min(3, (x1-x2)+) + (2-x3)+

/// User-specified problem. Every structural constant is required.
struct CustomSpec {
    std::string name = "custom";
    int dim = 0;
    VectorFieldFn drift;
    VectorFieldFn diffusion;
    std::optional<AxisCoeffs> axis;
    std::optional<double> sde_lipschitz;
    DriverFn driver;
    std::optional<double> driver_L;
    std::optional<double> driver_Ky;
    std::optional<double> driver_Kx;
    ScalarFieldFn g;
    std::optional<double> g_sup_norm;
    std::optional<double> g_lipschitz;
    double T = 1.0;
    std::vector<double> x0;
    std::optional<ColeHopfParams> cole_hopf;
    LatticeDefaults defaults;
};

struct CustomProblem {
    Problem problem;
    /// Sampled checks that contradict a stated constant.
    std::vector<std::string> warnings;
};

/// Validates a custom specification. Missing constants, a non-finite
/// sup-norm or a malformed shape raise Error; sampled violations of the stated
/// Lipschitz/growth constants become warnings.
CustomProblem custom(const CustomSpec& spec, std::uint64_t seed = 7);

}  // namespace qbsde
