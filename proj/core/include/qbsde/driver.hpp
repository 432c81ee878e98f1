#pragma once

#include "qbsde/numerics.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qbsde {

/// f(x, y, z) with z a row vector of size d.
using DriverFn =
    std::function<double(std::span<const double> x, double y, std::span<const double> z)>;

/// BSDE driver together with its structural constants:
///   |f(x,y,z) - f(x,y,z')| <= L (1 + |z| + |z'|) |z - z'|
///   |f(x,y,z)| <= L (1 + |y| + |z|^2)
///   K_y and K_x are global Lipschitz constants in y and x.
struct Driver {
    DriverFn eval;
    double local_lipschitz_L = 0.0;
    double lipschitz_Ky = 0.0;
    double lipschitz_Kx = 0.0;
    /// Global Lipschitz constant in z, when one is known (finite only for
    /// truncated drivers).
    double lipschitz_Kz = std::numeric_limits<double>::infinity();

    double operator()(std::span<const double> x, double y, std::span<const double> z) const {
        return eval(x, y, z);
    }
    bool y_independent() const { return lipschitz_Ky == 0.0; }
};

/// f(x, y, z) = (a/2)|z|^2 + c_y * y + phi(x), with phi bounded and Lipschitz.
/// An empty phi means phi = 0.
struct QuadraticDriverSpec {
    double a = 1.0;
    double c_y = 0.0;
    std::function<double(std::span<const double>)> phi;
    double phi_bound = 0.0;
    double phi_lipschitz = 0.0;
};

Driver quadratic_driver(const QuadraticDriverSpec& spec);

enum class TruncationMode { adaptive, fixed, none };

std::string to_string(TruncationMode mode);
/// Parses "adaptive", "fixed" or "none".
TruncationMode parse_truncation_mode(const std::string& text);

/// Truncation levels in force for a given number of time steps: N bounds the
/// z-Lipschitz constant of the driver, R bounds the increment weights.
struct TruncationLevels {
    double N = std::numeric_limits<double>::infinity();
    double R = std::numeric_limits<double>::infinity();
    bool truncated() const { return mode != TruncationMode::none; }
    TruncationMode mode = TruncationMode::none;
};

/// Radius r of the ball onto which z is projected in f_N.
///   proportional: r = rho N.
///   certified:    r = max(0, (N - L) / (2L)), so that L (1 + 2r) <= N.
enum class RadiusRule { proportional, certified };

std::string to_string(RadiusRule rule);
/// Parses "proportional" or "certified".
RadiusRule parse_radius_rule(const std::string& text);

struct TruncationPolicy {
    TruncationMode mode = TruncationMode::adaptive;
    double alpha = 0.25;
    double fixed_N = 1.0;
    double fixed_R = 1.0;
    RadiusRule radius_rule = RadiusRule::proportional;
    double rho = 1.0;

    static TruncationPolicy adaptive(double alpha) { return {TruncationMode::adaptive, alpha, 1.0, 1.0}; }
    static TruncationPolicy fixed(double N, double R) { return {TruncationMode::fixed, 0.0, N, R}; }
    static TruncationPolicy none() { return {TruncationMode::none, 0.0, 1.0, 1.0}; }

    /// Adaptive mode: N = n^alpha, R = log n.
    TruncationLevels resolve(int n) const;
};

struct TruncationRadius {
    double radius = 0.0;
    /// N <= L: the ball collapses to {0} and the driver loses its z-dependence.
    bool degenerate = false;
};

/// Largest r with L (1 + 2r) <= N, i.e. r = max(0, (N - L) / (2L)).
TruncationRadius truncation_radius(double L, double N);

/// Radius under the policy's rule; infinite when N is.
TruncationRadius truncation_radius(const TruncationPolicy& policy, double L, double N);

/// f_N(x, y, z) = f(x, y, pi_r(z)), pi_r the Euclidean projection onto the
/// ball of radius r.
Driver truncate_driver(const Driver& f, double r);

/// Euclidean projection of z onto the centered ball of radius r.
void project_to_ball(std::span<double> z, double r);

/// Componentwise clamp to [-R / sqrt(h), R / sqrt(h)]. R = 0 maps everything
/// to 0.
std::vector<double> clamp_weights(std::span<const double> dw_over_h, double R, double h);

enum class StabilityStatus { stable, violated, unverifiable };

std::string to_string(StabilityStatus status);

struct StabilityReport {
    /// sqrt(h d) * R * K_z: an upper bound on h |H| K_z.
    double value = std::numeric_limits<double>::infinity();
    double margin = 0.05;
    StabilityStatus status = StabilityStatus::unverifiable;
    std::string message;
};

/// Checks the sufficient condition (sup_i h |H_i|) K_z < 1 - margin for the
/// truncated scheme, using |H| <= sqrt(d) R / sqrt(h) and the z-Lipschitz
/// constant K_z = L (1 + 2r) of the driver truncated at radius r. Without an
/// explicit radius the certified one is used. Advisory only. N or R infinite
/// means the scheme is untruncated.
StabilityReport stability_diagnostic(int n, double h, double R, double N, double L, int d,
                                     std::optional<double> radius = std::nullopt);

}  // namespace qbsde
