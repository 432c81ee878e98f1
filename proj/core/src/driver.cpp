#include "qbsde/driver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qbsde {

namespace {

double squared_norm(std::span<const double> z) {
    double s = 0.0;
    for (double c : z) {
        s += c * c;
    }
    return s;
}

}  // namespace

Driver quadratic_driver(const QuadraticDriverSpec& spec) {
    if (!(spec.a >= 0.0)) {
        throw Error("driver: quadratic coefficient a must be non-negative");
    }
    Driver f;
    const double half_a = 0.5 * spec.a;
    const double c_y = spec.c_y;
    if (spec.phi) {
        f.eval = [half_a, c_y, phi = spec.phi](std::span<const double> x, double y,
                                               std::span<const double> z) {
            return half_a * squared_norm(z) + c_y * y + phi(x);
        };
    } else {
        f.eval = [half_a, c_y](std::span<const double>, double y, std::span<const double> z) {
            return half_a * squared_norm(z) + c_y * y;
        };
    }
    f.local_lipschitz_L = std::max({half_a, std::abs(c_y), spec.phi ? spec.phi_bound : 0.0});
    f.lipschitz_Ky = std::abs(c_y);
    f.lipschitz_Kx = spec.phi ? spec.phi_lipschitz : 0.0;
    return f;
}

std::string to_string(TruncationMode mode) {
    switch (mode) {
    case TruncationMode::adaptive: return "adaptive";
    case TruncationMode::fixed: return "fixed";
    case TruncationMode::none: return "none";
    }
    return "unknown";
}

TruncationMode parse_truncation_mode(const std::string& text) {
    if (text == "adaptive") return TruncationMode::adaptive;
    if (text == "fixed") return TruncationMode::fixed;
    if (text == "none") return TruncationMode::none;
    throw Error("unknown truncation mode '" + text + "' (expected adaptive|fixed|none)");
}

std::string to_string(RadiusRule rule) {
    return rule == RadiusRule::proportional ? "proportional" : "certified";
}

RadiusRule parse_radius_rule(const std::string& text) {
    if (text == "proportional") return RadiusRule::proportional;
    if (text == "certified") return RadiusRule::certified;
    throw Error("unknown radius rule '" + text + "' (expected proportional|certified)");
}

TruncationLevels TruncationPolicy::resolve(int n) const {
    if (n < 1) {
        throw Error("truncation: number of time steps must be at least 1");
    }
    TruncationLevels levels;
    levels.mode = mode;
    switch (mode) {
    case TruncationMode::adaptive:
        if (!(alpha >= 0.0)) {
            throw Error("truncation: alpha must be non-negative");
        }
        levels.N = std::pow(static_cast<double>(n), alpha);
        levels.R = std::log(static_cast<double>(n));
        break;
    case TruncationMode::fixed:
        if (!(fixed_N > 0.0) || !(fixed_R > 0.0)) {
            throw Error("truncation: fixed N and R must be positive");
        }
        levels.N = fixed_N;
        levels.R = fixed_R;
        break;
    case TruncationMode::none:
        break;
    }
    return levels;
}

TruncationRadius truncation_radius(double L, double N) {
    if (!(L >= 0.0) || !(N > 0.0)) {
        throw Error("truncation_radius: need L >= 0 and N > 0");
    }
    if (std::isinf(N) || L == 0.0) {
        return {std::numeric_limits<double>::infinity(), false};
    }
    if (N <= L) {
        return {0.0, true};
    }
    return {(N - L) / (2.0 * L), false};
}

TruncationRadius truncation_radius(const TruncationPolicy& policy, double L, double N) {
    if (std::isinf(N)) {
        return {N, false};
    }
    if (policy.radius_rule == RadiusRule::certified) {
        return truncation_radius(L, N);
    }
    if (!(policy.rho > 0.0)) {
        throw Error("truncation_radius: rho must be positive");
    }
    return {policy.rho * N, false};
}

void project_to_ball(std::span<double> z, double r) {
    const double norm = std::sqrt(squared_norm(z));
    if (norm > r) {
        const double scale = norm > 0.0 ? r / norm : 0.0;
        for (double& c : z) {
            c *= scale;
        }
    }
}

Driver truncate_driver(const Driver& f, double r) {
    if (!(r >= 0.0)) {
        throw Error("truncate_driver: radius must be non-negative");
    }
    if (std::isinf(r)) {
        return f;
    }
    Driver g = f;
    g.eval = [inner = f.eval, r](std::span<const double> x, double y, std::span<const double> z) {
        if (squared_norm(z) <= r * r) {
            return inner(x, y, z);
        }
        std::vector<double> projected(z.begin(), z.end());
        project_to_ball(projected, r);
        return inner(x, y, projected);
    };
    g.lipschitz_Kz = f.local_lipschitz_L == 0.0 ? 0.0 : f.local_lipschitz_L * (1.0 + 2.0 * r);
    return g;
}

std::vector<double> clamp_weights(std::span<const double> dw_over_h, double R, double h) {
    if (!(R >= 0.0) || !(h > 0.0)) {
        throw Error("clamp_weights: need R >= 0 and h > 0");
    }
    const double bound = R / std::sqrt(h);
    std::vector<double> out(dw_over_h.begin(), dw_over_h.end());
    for (double& c : out) {
        c = std::clamp(c, -bound, bound);
    }
    return out;
}

std::string to_string(StabilityStatus status) {
    switch (status) {
    case StabilityStatus::stable: return "stable";
    case StabilityStatus::violated: return "violated";
    case StabilityStatus::unverifiable: return "condition unverifiable (unbounded Lipschitz constant)";
    }
    return "unknown";
}

StabilityReport stability_diagnostic(int n, double h, double R, double N, double L, int d,
                                     std::optional<double> radius) {
    StabilityReport report;
    if (n < 1 || !(h > 0.0) || d < 1 || !(L >= 0.0)) {
        throw Error("stability_diagnostic: invalid scheme parameters");
    }
    if (std::isinf(N) || std::isinf(R)) {
        report.status = StabilityStatus::unverifiable;
        report.message = to_string(report.status);
        return report;
    }
    const auto certified = truncation_radius(L, N);
    const double r = radius ? *radius : certified.radius;
    const double kz = L == 0.0 ? 0.0 : L * (1.0 + 2.0 * r);
    report.value = std::sqrt(h * d) * R * kz;
    report.status = report.value < 1.0 - report.margin ? StabilityStatus::stable
                                                       : StabilityStatus::violated;
    std::ostringstream msg;
    msg << to_string(report.status) << ": sqrt(h d) R K_z = " << report.value
        << " (n=" << n << ", N=" << N << ", R=" << R << ", K_z=" << kz << ")";
    if (r == 0.0) {
        msg << "; N <= L, truncation radius collapsed to 0";
    }
    report.message = msg.str();
    return report;
}

}  // namespace qbsde
