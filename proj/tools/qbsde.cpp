// Command-line front end: quantizer grids, reference values, single solves
// and the convergence studies.

#include "qbsde/backward.hpp"
#include "qbsde/harness.hpp"
#include "qbsde/oracle.hpp"
#include "qbsde/quantizer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

namespace {

using nlohmann::json;

struct Options {
    std::string config;
    std::string model;
    int n = 12;
    std::vector<int> n_list;
    double alpha = 0.25;
    std::vector<double> alpha_list;
    int points = 0;
    int dim = 1;
    double delta = 0.0;
    int kappa = 0;
    std::vector<std::string> truncation{"adaptive"};
    std::string radius_rule = "proportional";
    double fixed_N = 1.0;
    double fixed_R = 1.0;
    int workers = 1;
    int nodes = 64;
    std::string out;
    std::string plot;
    bool no_timing = false;
};

// Config-file keys and how each one is applied; an option given on the
// command line wins over the file.
struct Binding {
    std::string flag;
    std::function<void(const json&)> apply;
};

std::vector<Binding> bindings(Options& o) {
    return {
        {"--model", [&](const json& v) { o.model = v.get<std::string>(); }},
        {"--n", [&](const json& v) { o.n = v.get<int>(); }},
        {"--n-list", [&](const json& v) { o.n_list = v.get<std::vector<int>>(); }},
        {"--alpha", [&](const json& v) { o.alpha = v.get<double>(); }},
        {"--alpha-list", [&](const json& v) { o.alpha_list = v.get<std::vector<double>>(); }},
        {"--points", [&](const json& v) { o.points = v.get<int>(); }},
        {"--dim", [&](const json& v) { o.dim = v.get<int>(); }},
        {"--delta", [&](const json& v) { o.delta = v.get<double>(); }},
        {"--kappa", [&](const json& v) { o.kappa = v.get<int>(); }},
        {"--truncation",
         [&](const json& v) {
             o.truncation = v.is_array() ? v.get<std::vector<std::string>>()
                                         : std::vector<std::string>{v.get<std::string>()};
         }},
        {"--radius-rule", [&](const json& v) { o.radius_rule = v.get<std::string>(); }},
        {"--fixed-N", [&](const json& v) { o.fixed_N = v.get<double>(); }},
        {"--fixed-R", [&](const json& v) { o.fixed_R = v.get<double>(); }},
        {"--workers", [&](const json& v) { o.workers = v.get<int>(); }},
        {"--nodes", [&](const json& v) { o.nodes = v.get<int>(); }},
        {"--out", [&](const json& v) { o.out = v.get<std::string>(); }},
        {"--plot", [&](const json& v) { o.plot = v.get<std::string>(); }},
        {"--no-timing", [&](const json& v) { o.no_timing = v.get<bool>(); }},
    };
}

std::string key_of(const std::string& flag) {
    std::string key = flag.substr(2);
    for (char& c : key) {
        if (c == '-') c = '_';
    }
    return key;
}

void apply_config(Options& o, const CLI::App& sub) {
    std::ifstream in(o.config);
    if (!in) {
        throw qbsde::Error("cannot open config file '" + o.config + "'");
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw qbsde::Error("config file '" + o.config + "': " + e.what());
    }
    if (!doc.is_object()) {
        throw qbsde::Error("config file '" + o.config + "' must hold a JSON object");
    }
    std::map<std::string, Binding> by_key;
    for (auto& b : bindings(o)) {
        by_key.emplace(key_of(b.flag), b);
    }
    for (const auto& [key, value] : doc.items()) {
        const auto it = by_key.find(key);
        if (it == by_key.end()) {
            throw qbsde::Error("config file: unknown key '" + key + "'");
        }
        const auto* opt = sub.get_option_no_throw(it->second.flag);
        if (opt && opt->count() > 0) {
            continue;
        }
        try {
            it->second.apply(value);
        } catch (const json::exception&) {
            throw qbsde::Error("config file: key '" + key + "' has the wrong type");
        }
    }
}

qbsde::TruncationPolicy policy_of(const Options& o, const std::string& mode) {
    qbsde::TruncationPolicy policy;
    switch (qbsde::parse_truncation_mode(mode)) {
    case qbsde::TruncationMode::adaptive: policy = qbsde::TruncationPolicy::adaptive(o.alpha); break;
    case qbsde::TruncationMode::fixed: policy = qbsde::TruncationPolicy::fixed(o.fixed_N, o.fixed_R); break;
    case qbsde::TruncationMode::none: policy = qbsde::TruncationPolicy::none(); break;
    }
    policy.radius_rule = qbsde::parse_radius_rule(o.radius_rule);
    return policy;
}

qbsde::StudyConfig study_config(const Options& o) {
    qbsde::StudyConfig c;
    if (!o.model.empty()) c.model = o.model;
    if (!o.n_list.empty()) c.n_list = o.n_list;
    if (!o.alpha_list.empty()) {
        c.alpha_list = o.alpha_list;
    } else {
        c.alpha_list = {o.alpha};
    }
    c.modes.clear();
    for (const auto& t : o.truncation) c.modes.push_back(qbsde::parse_truncation_mode(t));
    if (o.points > 0) c.M = o.points;
    if (o.delta > 0.0) c.delta = o.delta;
    if (o.kappa > 0) c.kappa = o.kappa;
    c.fixed_N = o.fixed_N;
    c.fixed_R = o.fixed_R;
    c.radius_rule = qbsde::parse_radius_rule(o.radius_rule);
    c.workers = o.workers;
    c.reference_nodes = o.nodes;
    c.timing = !o.no_timing;
    c.csv_path = o.out;
    c.plot_path = o.plot;
    return c;
}

void print_study(const qbsde::StudyResult& result) {
    std::printf("reference y0 = %.10g (nodes/dim %d, gap %.3g%s)\n", result.reference.y0,
                result.reference.nodes_per_dim, result.reference.gap,
                result.reference.converged ? "" : ", not converged");
    std::printf("%6s %10s %-10s %16s %12s %s\n", "n", "alpha", "mode", "y0", "abs_error", "");
    for (const auto& r : result.rows) {
        std::printf("%6d %10s %-10s %16.10g %12s %s\n", r.n,
                    r.alpha ? qbsde::format_exact(*r.alpha).c_str() : "-", r.truncation.c_str(),
                    r.y0_scheme,
                    r.abs_error ? std::to_string(*r.abs_error).c_str() : "-",
                    r.diverged ? "diverged" : "");
    }
    for (const auto& fit : result.fits) {
        if (fit.rate) {
            std::printf("rate[%s] = %.4f over %zu rows\n", fit.label.c_str(), *fit.rate, fit.rows_used);
        } else {
            std::printf("rate[%s] %s\n", fit.label.c_str(), qbsde::to_string(fit.status).c_str());
        }
    }
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw qbsde::Error("cannot write '" + path + "'");
    }
}

int run_quantizer(const Options& o) {
    const int d = o.dim;
    const int m = o.points > 0 ? o.points : 10;
    const auto base = qbsde::build_gaussian_grid_1d(m);
    const auto grid = qbsde::product_grid(base, d);
    std::printf("M=%d d=%d nodes=%zu distortion=%.17g stationarity_residual=%.3g\n", m, d,
                grid.size(), grid.distortion(), qbsde::stationarity_residual(base));
    if (!o.out.empty()) {
        qbsde::save_grid(grid, o.out);
        std::printf("wrote %s\n", o.out.c_str());
    }
    return 0;
}

int run_reference(const Options& o) {
    const auto problem = qbsde::builtin(o.model.empty() ? "model_I" : o.model);
    const auto spec = qbsde::reference_spec(problem, o.nodes);
    const auto check = qbsde::quadrature_self_check(spec);
    const auto value = qbsde::cole_hopf_y0(spec);
    std::printf("model=%s y0=%.12g rule=%s nodes/dim=%d self_check(%d vs %d)=%.3g escalated_gap=%.3g converged=%s\n",
                problem.name.c_str(), value.y0, qbsde::to_string(value.kind).c_str(), value.nodes_per_dim,
                spec.nodes_per_dim, 2 * spec.nodes_per_dim, check.gap, value.gap,
                value.converged ? "yes" : "no");
    return 0;
}

int run_solve(const Options& o) {
    const auto problem = qbsde::builtin(o.model.empty() ? "model_III" : o.model);
    auto params = qbsde::default_params(problem, o.n);
    if (o.points > 0) params.M = o.points;
    if (o.delta > 0.0) params.delta = o.delta;
    if (o.kappa > 0) params.kappa = o.kappa;
    params.workers = o.workers;
    if (o.truncation.size() != 1) {
        throw qbsde::Error("solve takes a single truncation mode");
    }
    params.truncation = policy_of(o, o.truncation.front());
    const auto result = qbsde::solve(problem, params);
    const auto doc = qbsde::to_json(result, problem);
    std::printf("%s\n", doc.c_str());
    if (!o.out.empty()) {
        write_file(o.out, doc + "\n");
    }
    return 0;
}

int run_converge(const Options& o) {
    const auto result = qbsde::run_convergence(study_config(o));
    print_study(result);
    return 0;
}

int run_alpha(const Options& o) {
    auto c = study_config(o);
    const auto defaults = qbsde::alpha_study_defaults();
    if (o.model.empty()) c.model = defaults.model;
    if (o.n_list.empty()) c.n_list = defaults.n_list;
    if (o.alpha_list.empty()) c.alpha_list = defaults.alpha_list;
    print_study(qbsde::run_alpha_study(c));
    return 0;
}

int run_table(const Options& o) {
    qbsde::Table1Options t;
    t.n = o.n;
    t.alpha = o.alpha;
    if (o.points > 0) t.M = o.points;
    if (o.delta > 0.0) t.delta = o.delta;
    if (o.kappa > 0) t.kappa = o.kappa;
    t.workers = o.workers;
    if (!o.model.empty()) t.models = {o.model};
    const auto table = qbsde::run_table1(t);
    std::printf("%s", qbsde::format_table1(table).c_str());
    if (!o.out.empty()) {
        write_file(o.out, qbsde::table1_json(table) + "\n");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"Quantized backward scheme for quadratic BSDEs"};
    app.require_subcommand(1);

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON file with option values; flags override it");
        sub->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", o.out, "Output file");
    };
    auto add_lattice = [&](CLI::App* sub) {
        sub->add_option("--points", o.points, "Total quantizer size M");
        sub->add_option("--delta", o.delta, "Lattice spacing");
        sub->add_option("--kappa", o.kappa, "Lattice half-width");
    };
    auto add_truncation = [&](CLI::App* sub) {
        sub->add_option("--truncation", o.truncation, "adaptive|fixed|none (studies accept several)");
        sub->add_option("--radius-rule", o.radius_rule, "proportional|certified");
        sub->add_option("--fixed-N", o.fixed_N, "N for fixed truncation");
        sub->add_option("--fixed-R", o.fixed_R, "R for fixed truncation");
    };

    auto* quant = app.add_subcommand("quantizer", "Build and save a Gaussian quantization grid");
    add_common(quant);
    quant->add_option("--points", o.points, "Points per dimension");
    quant->add_option("--dim", o.dim, "Dimension")->check(CLI::PositiveNumber);

    auto* ref = app.add_subcommand("reference", "Closed-form reference value by quadrature");
    add_common(ref);
    ref->add_option("--model", o.model, "Model name");
    ref->add_option("--nodes", o.nodes, "Starting quadrature nodes per dimension");

    auto* sol = app.add_subcommand("solve", "Run the scheme once and print a JSON report");
    add_common(sol);
    add_lattice(sol);
    add_truncation(sol);
    sol->add_option("--model", o.model, "Model name");
    sol->add_option("--n", o.n, "Time steps");
    sol->add_option("--alpha", o.alpha, "Adaptive truncation exponent");

    auto* conv = app.add_subcommand("converge", "Convergence study over a list of n");
    add_common(conv);
    add_lattice(conv);
    add_truncation(conv);
    conv->add_option("--model", o.model, "Model name");
    conv->add_option("--n-list", o.n_list, "Step counts")->delimiter(',');
    conv->add_option("--alpha", o.alpha, "Adaptive truncation exponent");
    conv->add_option("--alpha-list", o.alpha_list, "Several exponents")->delimiter(',');
    conv->add_option("--nodes", o.nodes, "Reference quadrature nodes per dimension");
    conv->add_option("--plot", o.plot, "SVG plot path");
    conv->add_flag("--no-timing", o.no_timing, "Leave the runtime column empty");

    auto* table = app.add_subcommand("table1", "Truncated against untruncated scheme in dimension 3");
    add_common(table);
    add_lattice(table);
    table->add_option("--model", o.model, "Restrict to one model");
    table->add_option("--n", o.n, "Time steps");
    table->add_option("--alpha", o.alpha, "Adaptive truncation exponent");

    auto* alpha = app.add_subcommand("alpha-study", "Error profiles for several alpha");
    add_common(alpha);
    add_lattice(alpha);
    alpha->add_option("--model", o.model, "Model name");
    alpha->add_option("--n-list", o.n_list, "Step counts")->delimiter(',');
    alpha->add_option("--alpha-list", o.alpha_list, "Exponents")->delimiter(',');
    alpha->add_option("--nodes", o.nodes, "Reference quadrature nodes per dimension");
    alpha->add_option("--plot", o.plot, "SVG plot path");
    alpha->add_flag("--no-timing", o.no_timing, "Leave the runtime column empty");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    const std::map<CLI::App*, std::function<int(const Options&)>> handlers{
        {quant, run_quantizer}, {ref, run_reference}, {sol, run_solve},
        {conv, run_converge},   {table, run_table},   {alpha, run_alpha},
    };
    try {
        for (const auto& [sub, handler] : handlers) {
            if (sub->parsed()) {
                if (!o.config.empty()) {
                    apply_config(o, *sub);
                }
                return handler(o);
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
