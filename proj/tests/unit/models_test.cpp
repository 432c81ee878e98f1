#include "qbsde/models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace {

using namespace qbsde;

TEST(Builtin, RegistryShapes) {
    struct Expected {
        const char* name;
        int dim;
        double a;
        double nu;
    };
    for (const auto& e : {Expected{"d1_alpha", 1, 5.0, 0.4}, Expected{"d2_fig1", 2, 1.0, 1.0},
                          Expected{"d2_fig2", 2, 3.5, 1.0}, Expected{"model_I", 3, 5.0, 1.0},
                          Expected{"model_II", 3, 5.0, 1.0}, Expected{"model_III", 3, 5.0, 1.0},
                          Expected{"model_IV", 3, 4.0, 1.0}}) {
        const auto p = builtin(e.name);
        EXPECT_EQ(p.name, e.name);
        EXPECT_EQ(p.dim, e.dim);
        EXPECT_EQ(p.x0, std::vector<double>(static_cast<std::size_t>(e.dim), 1.0));
        EXPECT_EQ(p.T, 1.0);
        ASSERT_TRUE(p.cole_hopf.has_value());
        EXPECT_EQ(p.cole_hopf->a, e.a);
        EXPECT_EQ(p.cole_hopf->nu, e.nu);
        EXPECT_EQ(p.driver.local_lipschitz_L, e.a / 2);
        EXPECT_TRUE(p.driver.y_independent());
        EXPECT_TRUE(p.coeffs.axis.has_value());
        EXPECT_TRUE(std::isfinite(p.g.sup_norm));
    }
    EXPECT_EQ(builtin_names().size(), 7u);
    EXPECT_THROW(builtin("model_V"), Error);
}

TEST(Builtin, TerminalFunctions) {
    const std::vector<double> x{0.5, 1.0, 1.5};
    const double s = std::sin(3.0);
    EXPECT_DOUBLE_EQ(builtin("model_I").g(x), 3.0 * s * s);
    EXPECT_DOUBLE_EQ(builtin("model_II").g(x),
                     3.0 * (std::pow(std::sin(0.5), 2) + std::pow(std::sin(1.0), 2) + std::pow(std::sin(1.5), 2)));
    EXPECT_DOUBLE_EQ(builtin("model_III").g(x), 4.0 * std::atan(3.0));
    // min binds the spread only.
    EXPECT_DOUBLE_EQ(builtin("model_IV").g(std::vector{9.0, 1.0, 0.5}), 3.0 + 1.5);
    EXPECT_DOUBLE_EQ(builtin("model_IV").g(std::vector{1.0, 2.0, 3.0}), 0.0);
    EXPECT_DOUBLE_EQ(builtin("model_IV").g(std::vector{2.0, 1.0, 1.0}), 1.0 + 1.0);
}

TEST(Builtin, RecordedConstantsHoldOnSamples) {
    std::mt19937_64 rng(4);
    std::lognormal_distribution<double> coord(0.0, 1.0);
    for (const auto& name : builtin_names()) {
        const auto p = builtin(name);
        const auto d = static_cast<std::size_t>(p.dim);
        for (int i = 0; i < 2000; ++i) {
            std::vector<double> x1(d), x2(d);
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                x1[j] = coord(rng);
                x2[j] = x1[j] * (1.0 + 0.05 * (coord(rng) - 1.0));
                dist += (x1[j] - x2[j]) * (x1[j] - x2[j]);
            }
            const double g1 = p.g(x1);
            EXPECT_LE(std::abs(g1), p.g.sup_norm) << name;
            if (dist > 0.0) {
                EXPECT_LE(std::abs(g1 - p.g(x2)), p.g.lipschitz * std::sqrt(dist) + 1e-12) << name;
            }
        }
    }
}

CustomSpec model_one_spec() {
    CustomSpec spec;
    spec.name = "copy_of_model_I";
    spec.dim = 3;
    AxisCoeffs axis;
    for (int j = 0; j < 3; ++j) {
        axis.drift.emplace_back([](double) { return 0.0; });
        axis.vol.emplace_back([](double x) { return x; });
    }
    spec.axis = axis;
    spec.sde_lipschitz = 1.0;
    spec.driver = [](std::span<const double>, double, std::span<const double> z) {
        double s = 0.0;
        for (double c : z) s += c * c;
        return 2.5 * s;
    };
    spec.driver_L = 2.5;
    spec.driver_Ky = 0.0;
    spec.driver_Kx = 0.0;
    spec.g = g_sin_squared_of_sum;
    spec.g_sup_norm = 3.0;
    spec.g_lipschitz = 3.0 * std::sqrt(3.0);
    spec.x0 = {1.0, 1.0, 1.0};
    return spec;
}

TEST(Custom, DuplicateOfBuiltinAgrees) {
    const auto made = custom(model_one_spec());
    EXPECT_TRUE(made.warnings.empty());
    const auto reference = builtin("model_I");
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n01;
    for (int i = 0; i < 100; ++i) {
        const std::vector<double> x{n01(rng), n01(rng), n01(rng)}, z{n01(rng), n01(rng), n01(rng)};
        EXPECT_EQ(made.problem.g(x), reference.g(x));
        EXPECT_DOUBLE_EQ(made.problem.driver(x, 0.3, z), reference.driver(x, 0.3, z));
    }
}

TEST(Custom, UnboundedTerminalConditionIsRejected) {
    auto spec = model_one_spec();
    spec.g_sup_norm = std::numeric_limits<double>::infinity();
    EXPECT_THROW(custom(spec), Error);
}

TEST(Custom, MissingConstantsAreErrors) {
    auto spec = model_one_spec();
    spec.driver_L.reset();
    EXPECT_THROW(custom(spec), Error);
    spec = model_one_spec();
    spec.g_lipschitz.reset();
    EXPECT_THROW(custom(spec), Error);
    spec = model_one_spec();
    spec.x0 = {1.0};
    EXPECT_THROW(custom(spec), Error);
    spec = model_one_spec();
    spec.g = nullptr;
    EXPECT_THROW(custom(spec), Error);
}

TEST(Custom, MisstatedLipschitzConstantWarns) {
    auto spec = model_one_spec();
    spec.g_lipschitz = 0.1;
    const auto made = custom(spec);
    ASSERT_EQ(made.warnings.size(), 1u);
    EXPECT_NE(made.warnings[0].find("g Lipschitz"), std::string::npos);
    spec = model_one_spec();
    spec.driver_L = 1.0;
    EXPECT_FALSE(custom(spec).warnings.empty());
}

}  // namespace
