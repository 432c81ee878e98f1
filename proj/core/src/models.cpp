#include "qbsde/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace qbsde {

double g_sum_sin_squared(std::span<const double> x) {
    double s = 0.0;
    for (double c : x) {
        const double t = std::sin(c);
        s += t * t;
    }
    return 3.0 * s;
}

double g_sin_squared_of_sum(std::span<const double> x) {
    double sum = 0.0;
    for (double c : x) sum += c;
    const double t = std::sin(sum);
    return 3.0 * t * t;
}

double g_atan_of_sum(std::span<const double> x) {
    double sum = 0.0;
    for (double c : x) sum += c;
    return 4.0 * std::atan(sum);
}

double g_capped_spread(std::span<const double> x) {
    return std::min(3.0, std::max(0.0, x[0] - x[1])) + std::max(0.0, 2.0 - x[2]);
}

std::vector<std::string> builtin_names() {
    return {"d1_alpha", "d2_fig1", "d2_fig2", "model_I", "model_II", "model_III", "model_IV"};
}

namespace {

Problem gbm_problem(std::string name, int d, double nu, double a, double x0,
                    TerminalCondition g, LatticeDefaults defaults) {
    Problem p;
    p.name = std::move(name);
    p.dim = d;
    p.coeffs = gbm_coeffs(d, nu);
    QuadraticDriverSpec driver;
    driver.a = a;
    p.driver = quadratic_driver(driver);
    p.g = std::move(g);
    p.T = 1.0;
    p.x0.assign(static_cast<std::size_t>(d), x0);
    p.cole_hopf = ColeHopfParams{a, nu};
    p.defaults = defaults;
    return p;
}

}  // namespace

Problem builtin(const std::string& name) {
    const double sqrt3 = std::sqrt(3.0);
    const LatticeDefaults d1{0.002, 3000, 100};
    const LatticeDefaults d2{0.05, 120, 100};
    const LatticeDefaults d3{0.1, 60, 216};
    if (name == "d1_alpha") {
        return gbm_problem(name, 1, 0.4, 5.0, 1.0, {g_sum_sin_squared, 3.0, 3.0}, d1);
    }
    if (name == "d2_fig1" || name == "d2_fig2") {
        const double a = name == "d2_fig1" ? 1.0 : 3.5;
        return gbm_problem(name, 2, 1.0, a, 1.0, {g_sum_sin_squared, 6.0, 3.0 * std::sqrt(2.0)},
                           d2);
    }
    if (name == "model_I") {
        return gbm_problem(name, 3, 1.0, 5.0, 1.0, {g_sin_squared_of_sum, 3.0, 3.0 * sqrt3}, d3);
    }
    if (name == "model_II") {
        return gbm_problem(name, 3, 1.0, 5.0, 1.0, {g_sum_sin_squared, 9.0, 3.0 * sqrt3}, d3);
    }
    if (name == "model_III") {
        return gbm_problem(name, 3, 1.0, 5.0, 1.0,
                           {g_atan_of_sum, 2.0 * std::numbers::pi, 4.0 * sqrt3}, d3);
    }
    if (name == "model_IV") {
        // GBM keeps every coordinate positive, where |g| <= 3 + 2.
        return gbm_problem(name, 3, 1.0, 4.0, 1.0, {g_capped_spread, 5.0, sqrt3}, d3);
    }
    std::ostringstream msg;
    msg << "unknown model '" << name << "' (known:";
    for (const auto& n : builtin_names()) msg << ' ' << n;
    msg << ')';
    throw Error(msg.str());
}

namespace {

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double c : v) s += c * c;
    return std::sqrt(s);
}

template <class T>
double require(const std::optional<T>& value, const char* what) {
    if (!value) {
        throw Error(std::string("custom problem: missing constant ") + what);
    }
    if (!std::isfinite(*value) || *value < 0.0) {
        throw Error(std::string("custom problem: constant ") + what +
                    " must be finite and non-negative");
    }
    return *value;
}

}  // namespace

CustomProblem custom(const CustomSpec& spec, std::uint64_t seed) {
    if (spec.dim < 1) {
        throw Error("custom problem: dimension must be at least 1");
    }
    if (spec.x0.size() != static_cast<std::size_t>(spec.dim)) {
        throw Error("custom problem: x0 must have dim entries");
    }
    if (!(spec.T > 0.0)) {
        throw Error("custom problem: horizon T must be positive");
    }
    if (!spec.driver || !spec.g || (!spec.axis && (!spec.drift || !spec.diffusion))) {
        throw Error("custom problem: drift, diffusion, driver and g are all required");
    }
    if (spec.g_sup_norm && std::isinf(*spec.g_sup_norm)) {
        throw Error("custom problem: terminal condition must be bounded (sup norm is infinite)");
    }
    const double sde_K = require(spec.sde_lipschitz, "sde_lipschitz");
    const double L = require(spec.driver_L, "driver_L");
    const double Ky = require(spec.driver_Ky, "driver_Ky");
    const double Kx = require(spec.driver_Kx, "driver_Kx");
    const double g_sup = require(spec.g_sup_norm, "g_sup_norm");
    const double g_lip = require(spec.g_lipschitz, "g_lipschitz");

    CustomProblem out;
    Problem& p = out.problem;
    p.name = spec.name;
    p.dim = spec.dim;
    if (spec.axis) {
        p.coeffs = axis_coeffs(*spec.axis, sde_K);
    } else {
        p.coeffs.dim = spec.dim;
        p.coeffs.drift = spec.drift;
        p.coeffs.diffusion = spec.diffusion;
        p.coeffs.lipschitz_K = sde_K;
    }
    p.driver.eval = spec.driver;
    p.driver.local_lipschitz_L = L;
    p.driver.lipschitz_Ky = Ky;
    p.driver.lipschitz_Kx = Kx;
    p.g = {spec.g, g_sup, g_lip};
    p.T = spec.T;
    p.x0 = spec.x0;
    p.cole_hopf = spec.cole_hopf;
    p.defaults = spec.defaults;

    // Sampled consistency checks around x0.
    const auto d = static_cast<std::size_t>(spec.dim);
    const CounterRng rng(seed);
    constexpr int kSamples = 1000;
    constexpr double kSlack = 1e-9;
    double worst_g_ratio = 0.0, worst_g_abs = 0.0, worst_growth = 0.0, worst_zlip = 0.0;
    double worst_sde = 0.0;
    std::vector<double> x1(d), x2(d), z1(d), z2(d), diff(d), b1(d), b2(d), s1(d * d), s2(d * d);
    for (int s = 0; s < kSamples; ++s) {
        const auto base = static_cast<std::uint64_t>(s) * (6 * d + 1);
        for (std::size_t j = 0; j < d; ++j) {
            x1[j] = spec.x0[j] + 3.0 * rng.normal(0, base + j);
            x2[j] = x1[j] + 0.1 * rng.normal(0, base + d + j);
            z1[j] = 2.0 * rng.normal(0, base + 2 * d + j);
            z2[j] = z1[j] + 0.5 * rng.normal(0, base + 3 * d + j);
        }
        const double y = 2.0 * rng.normal(0, base + 6 * d);
        for (std::size_t j = 0; j < d; ++j) diff[j] = x1[j] - x2[j];
        const double dx = norm(diff);
        const double g1 = spec.g(x1);
        worst_g_abs = std::max(worst_g_abs, std::abs(g1));
        if (dx > 0.0) {
            worst_g_ratio = std::max(worst_g_ratio, std::abs(g1 - spec.g(x2)) / dx);
        }
        const double f1 = spec.driver(x1, y, z1);
        const double zn1 = norm(z1);
        worst_growth = std::max(worst_growth, std::abs(f1) / (1.0 + std::abs(y) + zn1 * zn1));
        for (std::size_t j = 0; j < d; ++j) diff[j] = z1[j] - z2[j];
        const double dz = norm(diff);
        if (dz > 0.0) {
            const double ratio = std::abs(f1 - spec.driver(x1, y, z2)) / dz;
            worst_zlip = std::max(worst_zlip, ratio / (1.0 + zn1 + norm(z2)));
        }
        p.coeffs.drift(x1, b1);
        p.coeffs.drift(x2, b2);
        p.coeffs.diffusion(x1, s1);
        p.coeffs.diffusion(x2, s2);
        if (dx > 0.0) {
            for (std::size_t j = 0; j < d; ++j) diff[j] = b1[j] - b2[j];
            double ratio = norm(diff) / dx;
            double fro = 0.0;
            for (std::size_t j = 0; j < d * d; ++j) fro += (s1[j] - s2[j]) * (s1[j] - s2[j]);
            ratio = std::max(ratio, std::sqrt(fro) / dx);
            worst_sde = std::max(worst_sde, ratio);
        }
    }
    auto warn = [&](const char* what, double sampled, double stated) {
        if (sampled > stated * (1.0 + kSlack) + kSlack) {
            std::ostringstream msg;
            msg << what << ": sampled value " << sampled << " exceeds stated " << stated;
            out.warnings.push_back(msg.str());
        }
    };
    warn("g Lipschitz constant", worst_g_ratio, g_lip);
    warn("g sup norm", worst_g_abs, g_sup);
    warn("driver growth constant L", worst_growth, L);
    warn("driver local z-Lipschitz constant L", worst_zlip, L);
    warn("forward coefficient Lipschitz constant", worst_sde, sde_K);
    return out;
}

}  // namespace qbsde
