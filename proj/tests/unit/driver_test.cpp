#include "qbsde/driver.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

namespace {

using namespace qbsde;

Driver quadratic(double a) {
    QuadraticDriverSpec spec;
    spec.a = a;
    return quadratic_driver(spec);
}

double norm(const std::vector<double>& z) {
    double s = 0.0;
    for (double c : z) s += c * c;
    return std::sqrt(s);
}

TEST(QuadraticDriver, ValueAndConstants) {
    QuadraticDriverSpec spec;
    spec.a = 5.0;
    spec.c_y = -0.5;
    spec.phi = [](std::span<const double> x) { return std::sin(x[0]); };
    spec.phi_bound = 1.0;
    spec.phi_lipschitz = 1.0;
    const Driver f = quadratic_driver(spec);
    const std::vector<double> x{0.3}, z{1.0, 2.0};
    EXPECT_DOUBLE_EQ(f(x, 2.0, z), 2.5 * 5.0 - 1.0 + std::sin(0.3));
    EXPECT_EQ(f.local_lipschitz_L, 2.5);
    EXPECT_EQ(f.lipschitz_Ky, 0.5);
    EXPECT_EQ(f.lipschitz_Kx, 1.0);
    EXPECT_FALSE(f.y_independent());
    EXPECT_TRUE(quadratic(1.0).y_independent());
    EXPECT_THROW(quadratic(-1.0), Error);
}

TEST(QuadraticDriver, GrowthAndLocalLipschitzBoundsHoldOnSamples) {
    const Driver f = quadratic(3.0);
    const double L = f.local_lipschitz_L;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 3.0);
    const std::vector<double> x{0.0};
    for (int i = 0; i < 2000; ++i) {
        const std::vector<double> z1{g(rng), g(rng)}, z2{g(rng), g(rng)};
        const double y = g(rng);
        const double n1 = norm(z1), n2 = norm(z2);
        EXPECT_LE(std::abs(f(x, y, z1)), L * (1.0 + std::abs(y) + n1 * n1) + 1e-12);
        const std::vector<double> diff{z1[0] - z2[0], z1[1] - z2[1]};
        EXPECT_LE(std::abs(f(x, y, z1) - f(x, y, z2)), L * (1.0 + n1 + n2) * norm(diff) + 1e-12);
    }
}

TEST(TruncationRadius, Examples) {
    EXPECT_DOUBLE_EQ(truncation_radius(1.0, 3.0).radius, 1.0);
    EXPECT_DOUBLE_EQ(truncation_radius(2.5, 10.0).radius, 1.5);
    const auto collapsed = truncation_radius(2.5, 2.0);
    EXPECT_EQ(collapsed.radius, 0.0);
    EXPECT_TRUE(collapsed.degenerate);
    EXPECT_FALSE(truncation_radius(2.5, 10.0).degenerate);
    EXPECT_THROW(truncation_radius(1.0, 0.0), Error);
}

TEST(TruncationRadius, PolicyRules) {
    TruncationPolicy policy = TruncationPolicy::adaptive(0.25);
    EXPECT_DOUBLE_EQ(truncation_radius(policy, 2.5, 3.0).radius, 3.0);
    policy.rho = 0.5;
    EXPECT_DOUBLE_EQ(truncation_radius(policy, 2.5, 3.0).radius, 1.5);
    policy.radius_rule = RadiusRule::certified;
    EXPECT_DOUBLE_EQ(truncation_radius(policy, 2.5, 10.0).radius, 1.5);
    EXPECT_EQ(parse_radius_rule("certified"), RadiusRule::certified);
    EXPECT_EQ(to_string(RadiusRule::proportional), "proportional");
    EXPECT_THROW(parse_radius_rule("wide"), Error);
}

TEST(TruncateDriver, InsideAndOutsideTheBall) {
    const Driver f = quadratic(2.0);
    const Driver fn = truncate_driver(f, 1.0);
    const std::vector<double> x{0.0};
    EXPECT_DOUBLE_EQ(fn(x, 0.0, std::vector{0.5}), 1.0 * 0.25);
    EXPECT_DOUBLE_EQ(fn(x, 0.0, std::vector{4.0}), 1.0);
    EXPECT_DOUBLE_EQ(fn(x, 0.0, std::vector{0.0, -3.0}), 1.0);
    EXPECT_EQ(fn.lipschitz_Ky, f.lipschitz_Ky);
    EXPECT_EQ(fn.lipschitz_Kx, f.lipschitz_Kx);
    EXPECT_DOUBLE_EQ(fn.lipschitz_Kz, 1.0 * 3.0);
}

TEST(TruncateDriver, LipschitzRatioBoundedOnSamples) {
    const Driver f = quadratic(5.0);
    const double r = 1.5;
    const Driver fn = truncate_driver(f, r);
    const double bound = f.local_lipschitz_L * (1.0 + 2.0 * r);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 2.0);
    const std::vector<double> x{0.0};
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const std::vector<double> z1{g(rng), g(rng), g(rng)}, z2{g(rng), g(rng), g(rng)};
        const std::vector<double> diff{z1[0] - z2[0], z1[1] - z2[1], z1[2] - z2[2]};
        worst = std::max(worst, std::abs(fn(x, 0.0, z1) - fn(x, 0.0, z2)) / norm(diff));
    }
    EXPECT_LE(worst, bound + 1e-9);
}

TEST(TruncateDriver, AgreesWithRawDriverInsideTheBall) {
    const Driver f = quadratic(4.0);
    const Driver fn = truncate_driver(f, 2.0);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::vector<double> x{0.0};
    for (int i = 0; i < 500; ++i) {
        const std::vector<double> z{u(rng), u(rng)};
        EXPECT_EQ(fn(x, 0.0, z), f(x, 0.0, z));
    }
}

TEST(ClampWeights, Examples) {
    EXPECT_EQ(clamp_weights(std::vector{0.0, 0.0}, 2.0, 1.0), (std::vector{0.0, 0.0}));
    EXPECT_EQ(clamp_weights(std::vector{3.5}, 2.0, 1.0), (std::vector{2.0}));
    EXPECT_EQ(clamp_weights(std::vector{-3.5, 1.0}, 2.0, 1.0), (std::vector{-2.0, 1.0}));
    EXPECT_EQ(clamp_weights(std::vector{3.0}, 1.0, 0.25), (std::vector{2.0}));
    EXPECT_EQ(clamp_weights(std::vector{1.0}, 0.0, 0.25), (std::vector{0.0}));
    EXPECT_THROW(clamp_weights(std::vector{1.0}, 1.0, 0.0), Error);
}

TEST(ClampWeights, IdentityInsideAndBoundedOutside) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 5.0);
    for (int i = 0; i < 1000; ++i) {
        const std::vector<double> w{g(rng), g(rng)};
        const double R = 2.0, h = 0.1, bound = R / std::sqrt(h);
        const auto c = clamp_weights(w, R, h);
        for (std::size_t j = 0; j < 2; ++j) {
            EXPECT_LE(std::abs(c[j]), bound);
            if (std::abs(w[j]) <= bound) {
                EXPECT_EQ(c[j], w[j]);
            }
        }
    }
}

// E|clamp(Z, R) - Z| by adaptive-free composite Simpson quadrature.
double clamp_tail_by_quadrature(double R) {
    const double hi = 14.0;
    const int panels = 200000;
    const double dz = (hi - R) / panels;
    auto f = [R](double z) { return (z - R) * normal_pdf(z); };
    double s = f(R) + f(hi);
    for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(R + i * dz);
    return 2.0 * s * dz / 3.0;
}

TEST(ClampWeights, GaussianTailIdentity) {
    for (double R : {1.0, 2.0, 3.0}) {
        const double analytic = 2.0 * (normal_pdf(R) - R * normal_sf(R));
        EXPECT_NEAR(clamp_tail_by_quadrature(R), analytic, 1e-10) << "R=" << R;
    }
    EXPECT_NEAR(2.0 * (normal_pdf(2.0) - 2.0 * normal_sf(2.0)), 0.01698, 1e-5);
}

TEST(TruncationPolicy, AdaptiveSchedule) {
    const auto policy = TruncationPolicy::adaptive(0.25);
    const auto levels = policy.resolve(16);
    EXPECT_DOUBLE_EQ(levels.N, 2.0);
    EXPECT_DOUBLE_EQ(levels.R, std::log(16.0));
    EXPECT_TRUE(levels.truncated());
    double prev_N = 0.0, prev_R = -1.0;
    for (int n = 1; n <= 300; ++n) {
        const auto l = policy.resolve(n);
        EXPECT_GE(l.N, prev_N);
        EXPECT_GE(l.R, prev_R);
        prev_N = l.N;
        prev_R = l.R;
    }
    EXPECT_FALSE(TruncationPolicy::none().resolve(5).truncated());
    EXPECT_TRUE(std::isinf(TruncationPolicy::none().resolve(5).N));
    const auto fixed = TruncationPolicy::fixed(3.0, 1.5).resolve(10);
    EXPECT_EQ(fixed.N, 3.0);
    EXPECT_EQ(fixed.R, 1.5);
    EXPECT_THROW(TruncationPolicy::fixed(0.0, 1.0).resolve(10), Error);
    EXPECT_THROW(policy.resolve(0), Error);
    EXPECT_EQ(parse_truncation_mode("none"), TruncationMode::none);
    EXPECT_THROW(parse_truncation_mode("partial"), Error);
}

TEST(StabilityDiagnostic, Flags) {
    const double L = 2.5;
    // Untruncated: no finite Lipschitz constant.
    const double inf = std::numeric_limits<double>::infinity();
    const auto none = stability_diagnostic(12, 1.0 / 12, inf, inf, L, 1);
    EXPECT_EQ(none.status, StabilityStatus::unverifiable);
    EXPECT_EQ(none.message, "condition unverifiable (unbounded Lipschitz constant)");

    // n = 4, alpha = 5/8: large N and small n.
    const double N4 = std::pow(4.0, 0.625), R4 = std::log(4.0);
    EXPECT_EQ(stability_diagnostic(4, 0.25, R4, N4, L, 1, N4).status, StabilityStatus::violated);
    EXPECT_EQ(stability_diagnostic(4, 0.25, R4, N4, L, 1).status, StabilityStatus::violated);

    // Small L keeps the product below one.
    const auto stable = stability_diagnostic(4, 0.25, R4, std::pow(4.0, 0.25), 0.05, 1, std::pow(4.0, 0.25));
    EXPECT_EQ(stable.status, StabilityStatus::stable);
    EXPECT_NEAR(stable.value, 0.5 * R4 * 0.05 * (1.0 + 2.0 * std::sqrt(2.0)), 1e-15);
}

}  // namespace
