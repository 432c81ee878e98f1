// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include "qbsde/backward.hpp"
#include "qbsde/driver.hpp"
#include "qbsde/forward.hpp"
#include "qbsde/harness.hpp"
#include "qbsde/oracle.hpp"
#include "qbsde/quantizer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace qbsde;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 6) {
    std::ostringstream out;
    out.precision(digits);
    out << v;
    return out.str();
}

// Criterion 1: closed-form reference values.
Outcome reference_values() {
    const std::vector<std::pair<std::string, double>> expected{
        {"model_I", 2.67}, {"model_II", 7.53}, {"model_III", 5.38}, {"model_IV", 3.96}};
    Outcome out{true, ""};
    for (const auto& [name, target] : expected) {
        const auto value = cole_hopf_y0(reference_spec(builtin(name)));
        const bool ok = std::abs(value.y0 - target) <= 0.01;
        out.pass = out.pass && ok;
        out.detail += name + "=" + fmt(value.y0) + (ok ? "" : "(off)") + " nodes=" +
                      std::to_string(value.nodes_per_dim) + " gap=" + fmt(value.gap, 2) +
                      (value.converged ? "" : " unconverged") + "; ";
    }
    return out;
}

// Criteria 2 and 3 share one Table 1 run.
struct Table1Outcomes {
    Outcome adaptive;
    Outcome untruncated;
};

Table1Outcomes table1() {
    const auto table = run_table1(Table1Options{});
    const std::map<std::string, double> bound{
        {"model_I", 0.05}, {"model_II", 0.06}, {"model_III", 0.04}, {"model_IV", 0.20}};
    Table1Outcomes out{{true, ""}, {true, ""}};
    for (const auto& e : table) {
        const bool adaptive_ok = !e.adaptive.diagnostics.diverged &&
                                 e.adaptive_rel_error <= bound.at(e.model);
        out.adaptive.pass = out.adaptive.pass && adaptive_ok;
        out.adaptive.detail += e.model + " y0=" + fmt(e.adaptive.y0) + " ref=" + fmt(e.reference) +
                               " rel=" + fmt(e.adaptive_rel_error, 3) + (adaptive_ok ? "" : "(off)") +
                               "; ";

        const auto& u = e.untruncated;
        const bool blown = u.diagnostics.diverged || !std::isfinite(u.y0) || std::abs(u.y0) > 1e3;
        const bool ok = e.model == "model_III"
                            ? !blown && e.untruncated_rel_error <= 0.05
                            : blown;
        out.untruncated.pass = out.untruncated.pass && ok;
        out.untruncated.detail += e.model + " y0=" + fmt(u.y0) +
                                  (u.diagnostics.diverged ? " diverged" : "") +
                                  (ok ? "" : "(off)") + "; ";
    }
    return out;
}

// Criterion 4: d = 2 convergence rate.
Outcome d2_convergence() {
    StudyConfig config;
    config.model = "d2_fig1";
    config.n_list = {5, 10, 20, 40};
    config.alpha_list = {0.25};
    config.M = 100;
    const auto result = run_convergence(config);
    const auto& fit = result.fits.front();
    const auto& rows = result.rows;
    const bool rate_ok = fit.rate && *fit.rate >= 0.4 && *fit.rate <= 1.1;
    const bool shrinks = rows.front().abs_error && rows.back().abs_error &&
                         *rows.back().abs_error < *rows.front().abs_error;
    std::string detail = "rate=" + (fit.rate ? fmt(*fit.rate, 4) : std::string("undefined")) + " errors:";
    for (const auto& r : rows) {
        detail += " n=" + std::to_string(r.n) + ":" + (r.abs_error ? fmt(*r.abs_error, 3) : "diverged");
    }
    return {rate_ok && shrinks, detail};
}

// Criterion 5: alpha study.
Outcome alpha_study() {
    const auto result = run_alpha_study(alpha_study_defaults());
    const int last = alpha_study_defaults().n_list.back();
    std::map<double, const StudyRow*> final_rows;
    for (const auto& r : result.rows) {
        if (r.n == last && r.alpha) final_rows[*r.alpha] = &r;
    }
    auto rel = [&](double alpha) -> std::optional<double> {
        const StudyRow* r = final_rows.at(alpha);
        if (r->diverged || !r->rel_error) return std::nullopt;
        return *r->rel_error;
    };
    const auto quarter = rel(0.25);
    std::string detail;
    for (const auto& [alpha, r] : final_rows) {
        detail += "alpha=" + fmt(alpha, 3) + ":" + (r->rel_error ? fmt(*r->rel_error, 3) : "diverged") + " ";
    }
    if (!quarter) return {false, detail + "(alpha=1/4 diverged)"};
    const bool quarter_ok = *quarter <= 0.02;
    const auto zero = rel(0.0);
    const bool zero_ok = !zero || *zero >= 5.0 * *quarter;
    bool neighbours_ok = true;
    for (double alpha : {0.125, 0.375}) {
        const auto e = rel(alpha);
        neighbours_ok = neighbours_ok && e && *e <= 3.0 * *quarter && *quarter <= 3.0 * *e;
    }
    detail += "| alpha=1/4 <= 2%: " + std::string(quarter_ok ? "yes" : "no");
    detail += ", alpha=0 >= 5x or diverged: " + std::string(zero_ok ? "yes" : "no") +
              (zero ? " (ratio " + fmt(*zero / *quarter, 3) + ")" : "");
    detail += ", 1/8 and 3/8 within 3x: " + std::string(neighbours_ok ? "yes" : "no");
    return {quarter_ok && zero_ok && neighbours_ok, detail};
}

// Random bounded Lipschitz terminal function c0 + c1 sin(k x + p) summed over axes.
struct RandomG {
    double c0, c1, k, p;
    double operator()(std::span<const double> x) const {
        double s = c0;
        for (double v : x) s += c1 * std::sin(k * v + p);
        return s;
    }
};

Problem scalar_gbm(int d, double a, double nu, ScalarFieldFn g, double sup) {
    Problem p;
    p.name = "random";
    p.dim = d;
    p.coeffs = gbm_coeffs(d, nu);
    QuadraticDriverSpec spec;
    spec.a = a;
    p.driver = quadratic_driver(spec);
    p.g = {std::move(g), sup, 1.0};
    p.x0.assign(static_cast<std::size_t>(d), 1.0);
    return p;
}

// Criterion 6: lattice solver against the explicit path-tree recursion.
Outcome oracle_equivalence() {
    std::mt19937_64 rng(20140601);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> pick_n(1, 3), pick_m(1, 3), pick_kappa(4, 12);
    const int instances = 30;
    double worst = 0.0;
    for (int t = 0; t < instances; ++t) {
        const RandomG g{u(rng) - 0.5, 0.5 + 2.0 * u(rng), 0.5 + 3.0 * u(rng), 6.0 * u(rng)};
        const auto problem = scalar_gbm(1, 0.2 + 5.0 * u(rng), 0.2 + u(rng), g, std::abs(g.c0) + g.c1);
        SchemeParams params;
        params.n = pick_n(rng);
        params.M = pick_m(rng);
        params.delta = 0.02 + 0.2 * u(rng);
        params.kappa = pick_kappa(rng);
        params.truncation = t % 3 == 2 ? TruncationPolicy::none() : TruncationPolicy::adaptive(0.5 * u(rng));
        const double lattice = solve(problem, params).y0;
        const double tree = naive_recursive_oracle(problem, params);
        worst = std::max(worst, std::abs(lattice - tree));
    }
    return {worst <= 1e-12, std::to_string(instances) + " instances, max |difference| = " + fmt(worst, 3)};
}

// Criterion 7: comparison for ordered terminal conditions.
Outcome comparison() {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int pairs = 0, stable = 0;
    double worst = 0.0;
    while (pairs < 50) {
        const int d = pairs % 2 == 0 ? 1 : 2;
        const RandomG g1{u(rng), 0.5 + u(rng), 0.5 + 2.0 * u(rng), 6.0 * u(rng)};
        const double lift = 0.1 + u(rng), k = 0.5 + 2.0 * u(rng), p = 6.0 * u(rng);
        // g2 = g1 - lift (1 + cos(k sum x + p)) / 2 <= g1.
        const auto g2 = [g1, lift, k, p](std::span<const double> x) {
            double s = 0.0;
            for (double v : x) s += v;
            return g1(x) - lift * 0.5 * (1.0 + std::cos(k * s + p));
        };
        const double a = 0.02 + 0.1 * u(rng), nu = 0.3 + 0.7 * u(rng);
        SchemeParams params;
        params.n = 3 + static_cast<int>(3 * u(rng));
        params.M = d == 1 ? 8 : 25;
        params.delta = 0.05;
        params.kappa = d == 1 ? 80 : 30;
        params.keep_fields = true;
        const auto r1 = solve(scalar_gbm(d, a, nu, g1, 10.0), params);
        const auto r2 = solve(scalar_gbm(d, a, nu, g2, 10.0), params);
        ++pairs;
        if (r1.diagnostics.stability.status != StabilityStatus::stable) continue;
        ++stable;
        for (std::size_t i = 0; i < r1.fields.size(); ++i) {
            for (std::size_t x = 0; x < r1.fields[i].u.size(); ++x) {
                worst = std::max(worst, r2.fields[i].u[x] - r1.fields[i].u[x]);
            }
        }
    }
    return {stable == pairs && worst <= 1e-12,
            std::to_string(stable) + "/" + std::to_string(pairs) +
                " pairs stable, max (u2 - u1) = " + fmt(worst, 3)};
}

// Criterion 8: a-priori bound over every builtin.
Outcome apriori_bound() {
    Outcome out{true, ""};
    for (const auto& name : builtin_names()) {
        const auto problem = builtin(name);
        // The lattice reaches negative coordinates, where model_IV's g exceeds its recorded sup.
        double sup_u = 0.0, sup_g = problem.g.sup_norm;
        for (int n : {5, 10, 20, 40}) {
            const auto result = solve(problem, default_params(problem, n));
            for (double s : result.diagnostics.sup_abs_u) sup_u = std::max(sup_u, s);
            sup_g = std::max(sup_g, result.diagnostics.sup_abs_u.back());
        }
        const bool ok = sup_u <= sup_g + 1.0;
        out.pass = out.pass && ok;
        out.detail += name + " sup|u|=" + fmt(sup_u, 4) + " sup|g|=" + fmt(sup_g, 4) + (ok ? "" : "(off)") + "; ";
    }
    return out;
}

// Criterion 9: quantizer rate and stationarity.
Outcome quantizer_rate() {
    const std::vector<int> sizes{8, 16, 32, 64, 128, 256};
    const double slope = grid_distortion_rate(1, sizes);
    double worst = 0.0;
    for (int m : {1, 2, 3, 4, 5, 8, 10, 16, 32, 64, 100, 128, 216, 256}) {
        worst = std::max(worst, stationarity_residual(build_gaussian_grid_1d(m)));
    }
    return {slope >= -2.3 && slope <= -1.7 && worst < 1e-9,
            "slope=" + fmt(slope, 5) + " max stationarity residual=" + fmt(worst, 3)};
}

// Criterion 10: E|clamp(Z, R) - Z| by Simpson quadrature against the closed form.
Outcome clamp_tail() {
    Outcome out{true, ""};
    for (double R : {1.0, 2.0, 3.0}) {
        const int panels = 400000;
        const double lo = -14.0, hi = 14.0, dz = (hi - lo) / panels;
        auto f = [R](double z) {
            const double c = clamp_weights(std::vector{z}, R, 1.0)[0];
            return std::abs(c - z) * normal_pdf(z);
        };
        double s = f(lo) + f(hi);
        for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + i * dz);
        const double numeric = s * dz / 3.0;
        const double analytic = 2.0 * (normal_pdf(R) - R * normal_sf(R));
        const bool ok = std::abs(numeric - analytic) <= 1e-3;
        out.pass = out.pass && ok;
        out.detail += "R=" + fmt(R, 2) + " quadrature=" + fmt(numeric, 8) + " analytic=" + fmt(analytic, 8) + "; ";
    }
    return out;
}

// Criterion 11: determinism and worker neutrality.
Outcome determinism() {
    StudyConfig config;
    config.model = "d2_fig1";
    config.n_list = {5, 10};
    config.modes = {TruncationMode::adaptive, TruncationMode::none};
    config.timing = false;
    const auto csv1 = format_csv(run_convergence(config).rows);
    const auto csv2 = format_csv(run_convergence(config).rows);

    const auto problem = builtin("model_I");
    SchemeParams params = default_params(problem, 6);
    const double y1 = solve(problem, params).y0;
    const double y1_again = solve(problem, params).y0;
    params.workers = 4;
    const double y4 = solve(problem, params).y0;
    const bool ok = csv1 == csv2 && y1 == y1_again && y1 == y4;
    return {ok, std::string("csv identical: ") + (csv1 == csv2 ? "yes" : "no") +
                    ", y0 repeat identical: " + (y1 == y1_again ? "yes" : "no") +
                    ", workers 1 vs 4 identical: " + (y1 == y4 ? "yes" : "no") + " (y0=" +
                    format_exact(y1) + ")"};
}

// Criterion 12: Euler perturbation stability.
Outcome euler_stability() {
    const auto coeffs = gbm_coeffs(2, 1.0);
    const std::vector<double> x0{1.0, 1.0}, x0t{1.02, 0.97};
    const PerturbationFn zeta = [](std::size_t path, int step, double h, std::span<double> z) {
        const double sign = (path + static_cast<std::size_t>(step)) % 2 == 0 ? 1.0 : -1.0;
        z[0] = 0.05 * h * sign;
        z[1] = 0.03 * h;
    };
    std::vector<double> c;
    std::string detail;
    for (int n : {10, 20, 40}) {
        const auto s = coupled_euler_gap(coeffs, n, 1.0, x0, x0t, zeta, 50000, 2024);
        c.push_back(s.stability_constant);
        detail += "n=" + std::to_string(n) + " C=" + fmt(s.stability_constant, 5) + " ";
    }
    const bool ok = c[0] > 0.0 && c[1] <= 2.0 * c[0] && c[2] <= 2.0 * c[1];
    return {ok, detail};
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = check();
        } catch (const std::exception& e) {
            out = {false, std::string("error: ") + e.what()};
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += out.pass ? 0 : 1;
        std::printf("%s %2d %-22s %s[%.1fs]\n", out.pass ? "PASS" : "FAIL", id, name,
                    out.detail.c_str(), seconds);
        std::fflush(stdout);
    };

    report(1, "reference-values", reference_values);
    Table1Outcomes t1;
    bool t1_ran = false;
    auto run_t1 = [&]() {
        if (!t1_ran) {
            t1 = table1();
            t1_ran = true;
        }
    };
    report(2, "table1-adaptive", [&] { run_t1(); return t1.adaptive; });
    report(3, "table1-no-truncation", [&] { run_t1(); return t1.untruncated; });
    report(4, "d2-convergence-rate", d2_convergence);
    report(5, "alpha-study", alpha_study);
    report(6, "oracle-equivalence", oracle_equivalence);
    report(7, "comparison", comparison);
    report(8, "a-priori-bound", apriori_bound);
    report(9, "quantizer-rate", quantizer_rate);
    report(10, "clamp-tail", clamp_tail);
    report(11, "determinism", determinism);
    report(12, "euler-stability", euler_stability);
    std::printf("%d of 12 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
