#include "qbsde/harness.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace qbsde {

namespace {

constexpr double kExactTolerance = 1e-12;

void require_known_model(const std::string& name) {
    const auto names = builtin_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
        builtin(name);  // throws with the list of known models
    }
}

SchemeParams study_params(const Problem& problem, const StudyConfig& config, int n,
                          TruncationMode mode, double alpha) {
    SchemeParams params = default_params(problem, n);
    if (config.M) params.M = *config.M;
    if (config.delta) params.delta = *config.delta;
    if (config.kappa) params.kappa = *config.kappa;
    params.workers = config.workers;
    switch (mode) {
    case TruncationMode::adaptive: params.truncation = TruncationPolicy::adaptive(alpha); break;
    case TruncationMode::fixed:
        params.truncation = TruncationPolicy::fixed(config.fixed_N, config.fixed_R);
        break;
    case TruncationMode::none: params.truncation = TruncationPolicy::none(); break;
    }
    params.truncation.radius_rule = config.radius_rule;
    return params;
}

StudyRow make_row(const SolveResult& result, const Problem& problem, double reference,
                  bool timing) {
    StudyRow row;
    row.n = result.params.n;
    row.h = problem.T / result.params.n;
    if (result.params.truncation.mode == TruncationMode::adaptive) {
        row.alpha = result.params.truncation.alpha;
    }
    row.truncation = to_string(result.params.truncation.mode);
    row.y0_scheme = result.y0;
    row.y0_reference = reference;
    row.diverged = result.diagnostics.diverged;
    if (!row.diverged) {
        row.abs_error = std::abs(result.y0 - reference);
        row.rel_error = reference != 0.0 ? *row.abs_error / std::abs(reference)
                                         : std::numeric_limits<double>::infinity();
    }
    if (timing) {
        row.runtime_ms = result.runtime_ms;
    }
    return row;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open '" + path + "' for writing");
    }
    out << text;
    out.flush();
    if (!out) {
        throw Error("failed writing '" + path + "'");
    }
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path + "' for reading");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

double plot_cap(const Problem& problem) { return 10.0 * problem.g.sup_norm; }

StudyResult run_rows(const StudyConfig& config, bool by_alpha) {
    validate(config);
    const Problem problem = builtin(config.model);
    StudyResult result;
    result.reference = cole_hopf_y0(reference_spec(problem, config.reference_nodes));
    for (const TruncationMode mode : config.modes) {
        // Alpha only matters in adaptive mode.
        const std::vector<double> alphas =
            mode == TruncationMode::adaptive ? config.alpha_list : std::vector<double>{0.0};
        for (const double alpha : alphas) {
            for (const int n : config.n_list) {
                const auto solved = solve(problem, study_params(problem, config, n, mode, alpha));
                result.rows.push_back(make_row(solved, problem, result.reference.y0, config.timing));
            }
        }
    }
    result.fits = fit_series(result.rows, by_alpha);
    if (!config.csv_path.empty()) {
        emit_csv(result.rows, config.csv_path);
    }
    if (!config.plot_path.empty()) {
        emit_plot(result.rows, config.plot_path, by_alpha, plot_cap(problem));
    }
    return result;
}

}  // namespace

void validate(const StudyConfig& config) {
    require_known_model(config.model);
    if (config.n_list.empty()) {
        throw Error("study: n_list must not be empty");
    }
    for (std::size_t i = 0; i < config.n_list.size(); ++i) {
        if (config.n_list[i] < 1) {
            throw Error("study: every n must be at least 1");
        }
        if (i > 0 && config.n_list[i] <= config.n_list[i - 1]) {
            throw Error("study: n_list must be strictly increasing");
        }
    }
    if (config.modes.empty()) {
        throw Error("study: at least one truncation mode is required");
    }
    if (config.alpha_list.empty()) {
        throw Error("study: alpha_list must not be empty");
    }
    for (const double alpha : config.alpha_list) {
        if (!(alpha >= 0.0)) {
            throw Error("study: alpha must be non-negative");
        }
    }
    if (config.workers < 1) {
        throw Error("study: worker count must be at least 1");
    }
}

std::string to_string(FitStatus status) {
    switch (status) {
    case FitStatus::fitted: return "fitted";
    case FitStatus::exact: return "exact";
    case FitStatus::undefined: return "undefined";
    }
    return "unknown";
}

std::string series_label(const StudyRow& row, bool by_alpha) {
    if (by_alpha && row.alpha) {
        std::ostringstream out;
        out << "alpha=" << *row.alpha;
        return out.str();
    }
    return row.truncation;
}

std::vector<SeriesFit> fit_series(const std::vector<StudyRow>& rows, bool by_alpha) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const StudyRow*>> groups;
    for (const auto& row : rows) {
        const auto label = series_label(row, by_alpha);
        if (!groups.contains(label)) {
            order.push_back(label);
        }
        groups[label].push_back(&row);
    }
    std::vector<SeriesFit> fits;
    for (const auto& label : order) {
        SeriesFit fit;
        fit.label = label;
        std::vector<double> ns, errors;
        bool all_exact = true;
        for (const StudyRow* row : groups[label]) {
            if (row->diverged || !row->abs_error) {
                all_exact = false;
                continue;
            }
            all_exact = all_exact && *row->abs_error <= kExactTolerance;
            if (*row->abs_error > 0.0) {
                ns.push_back(row->n);
                errors.push_back(*row->abs_error);
            }
        }
        fit.rows_used = ns.size();
        if (all_exact) {
            fit.status = FitStatus::exact;
        } else if (ns.size() >= 2) {
            try {
                fit.rate = -fit_loglog_slope(ns, errors);
                fit.status = FitStatus::fitted;
            } catch (const NumericalError&) {
                fit.status = FitStatus::undefined;
            }
        }
        fits.push_back(fit);
    }
    return fits;
}

StudyResult run_convergence(const StudyConfig& config) {
    const bool by_alpha = config.alpha_list.size() > 1;
    StudyResult result = run_rows(config, by_alpha);
    const bool any_converged = std::any_of(result.rows.begin(), result.rows.end(),
                                           [](const StudyRow& r) { return !r.diverged; });
    if (!any_converged) {
        throw Error("convergence study: every row diverged, the rate is undefined");
    }
    return result;
}

StudyConfig alpha_study_defaults() {
    StudyConfig config;
    config.model = "d1_alpha";
    config.alpha_list = {0.0, 0.125, 0.25, 0.375, 0.625};
    config.n_list = {5, 10, 25, 50, 100, 150, 250};
    config.modes = {TruncationMode::adaptive};
    return config;
}

StudyResult run_alpha_study(const StudyConfig& config) {
    StudyConfig adaptive = config;
    adaptive.modes = {TruncationMode::adaptive};
    return run_rows(adaptive, true);
}

std::vector<Table1Entry> run_table1(const Table1Options& options) {
    std::vector<Table1Entry> table;
    for (const auto& name : options.models) {
        const Problem problem = builtin(name);
        Table1Entry entry;
        entry.model = name;
        const auto reference = cole_hopf_y0(reference_spec(problem));
        entry.reference = reference.y0;
        entry.reference_converged = reference.converged;
        StudyConfig config;
        config.model = name;
        config.M = options.M;
        config.delta = options.delta;
        config.kappa = options.kappa;
        config.workers = options.workers;
        entry.adaptive = solve(problem, study_params(problem, config, options.n,
                                                     TruncationMode::adaptive, options.alpha));
        entry.untruncated = solve(problem, study_params(problem, config, options.n,
                                                        TruncationMode::none, 0.0));
        entry.adaptive_rel_error = (entry.adaptive.y0 - entry.reference) / entry.reference;
        entry.untruncated_rel_error = (entry.untruncated.y0 - entry.reference) / entry.reference;
        table.push_back(std::move(entry));
    }
    return table;
}

std::string format_table1(const std::vector<Table1Entry>& table) {
    std::ostringstream out;
    auto cell = [](const SolveResult& r, double rel) {
        std::ostringstream c;
        if (r.diagnostics.diverged) {
            c << "diverged";
        } else {
            c << std::setprecision(4) << r.y0 << " (" << std::showpos << std::fixed
              << std::setprecision(1) << 100.0 * rel << "%)";
        }
        return c.str();
    };
    out << std::left << std::setw(12) << "model" << std::setw(14) << "reference"
        << std::setw(24) << "adaptive" << "no truncation\n";
    for (const auto& e : table) {
        std::ostringstream ref;
        ref << std::fixed << std::setprecision(4) << e.reference << (e.reference_converged ? "" : "*");
        out << std::left << std::setw(12) << e.model << std::setw(14) << ref.str() << std::setw(24)
            << cell(e.adaptive, e.adaptive_rel_error)
            << cell(e.untruncated, e.untruncated_rel_error) << '\n';
    }
    if (std::any_of(table.begin(), table.end(),
                    [](const Table1Entry& e) { return !e.reference_converged; })) {
        out << "* quadrature gap above tolerance at the largest node count\n";
    }
    return out.str();
}

std::string table1_json(const std::vector<Table1Entry>& table) {
    using nlohmann::json;
    auto number = [](double x) -> json { return std::isfinite(x) ? json(x) : json(nullptr); };
    json doc = json::array();
    for (const auto& e : table) {
        doc.push_back({
            {"model", e.model},
            {"reference", e.reference},
            {"reference_converged", e.reference_converged},
            {"adaptive", {{"y0", number(e.adaptive.y0)},
                          {"rel_error", number(e.adaptive_rel_error)},
                          {"diverged", e.adaptive.diagnostics.diverged},
                          {"runtime_ms", e.adaptive.runtime_ms}}},
            {"no_truncation", {{"y0", number(e.untruncated.y0)},
                               {"rel_error", number(e.untruncated_rel_error)},
                               {"diverged", e.untruncated.diagnostics.diverged},
                               {"runtime_ms", e.untruncated.runtime_ms}}},
        });
    }
    return doc.dump(2);
}

std::string format_csv(const std::vector<StudyRow>& rows) {
    auto opt = [](const std::optional<double>& v) { return v ? format_exact(*v) : std::string(); };
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& r : rows) {
        out += std::to_string(r.n) + ',' + format_exact(r.h) + ',' + opt(r.alpha) + ',' +
               r.truncation + ',' + format_exact(r.y0_scheme) + ',' + format_exact(r.y0_reference) +
               ',' + opt(r.abs_error) + ',' + opt(r.rel_error) + ',' + opt(r.runtime_ms) + ',' +
               (r.diverged ? "1" : "0") + '\n';
    }
    return out;
}

void emit_csv(const std::vector<StudyRow>& rows, const std::string& path) {
    if (rows.empty()) {
        throw Error("emit_csv: no rows to write");
    }
    write_text(path, format_csv(rows));
}

std::vector<StudyRow> parse_csv_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) {
        throw Error("csv: missing or unexpected header");
    }
    std::vector<StudyRow> rows;
    int line_no = 1;
    auto number = [&](const std::string& field, const char* what) {
        std::size_t used = 0;
        double value = 0.0;
        try {
            value = std::stod(field, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != field.size()) {
            throw Error("csv line " + std::to_string(line_no) + ": bad " + what + " '" + field + "'");
        }
        return value;
    };
    auto optional_number = [&](const std::string& field, const char* what) -> std::optional<double> {
        if (field.empty()) return std::nullopt;
        return number(field, what);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string item;
        std::istringstream fields(line);
        while (std::getline(fields, item, ',')) f.push_back(item);
        if (!line.empty() && line.back() == ',') f.emplace_back();
        if (f.size() != 10) {
            throw Error("csv line " + std::to_string(line_no) + ": expected 10 fields, found " +
                        std::to_string(f.size()));
        }
        StudyRow r;
        r.n = static_cast<int>(number(f[0], "n"));
        r.h = number(f[1], "h");
        r.alpha = optional_number(f[2], "alpha");
        r.truncation = f[3];
        r.y0_scheme = number(f[4], "y0_scheme");
        r.y0_reference = number(f[5], "y0_reference");
        r.abs_error = optional_number(f[6], "abs_error");
        r.rel_error = optional_number(f[7], "rel_error");
        r.runtime_ms = optional_number(f[8], "runtime_ms");
        if (f[9] != "0" && f[9] != "1") {
            throw Error("csv line " + std::to_string(line_no) + ": diverged flag must be 0 or 1");
        }
        r.diverged = f[9] == "1";
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<StudyRow> parse_csv(const std::string& path) { return parse_csv_text(read_text(path)); }

std::string format_plot(const std::vector<StudyRow>& rows, bool by_alpha, double cap) {
    if (rows.empty()) {
        throw Error("plot: no rows to draw");
    }
    if (!(cap > 0.0)) {
        throw Error("plot: error cap must be positive");
    }
    constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 170, kTop = 20,
                     kBottom = 50;
    constexpr double kFloor = 1e-16;

    std::vector<std::string> order;
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    for (const auto& r : rows) {
        const auto label = series_label(r, by_alpha);
        if (!series.contains(label)) order.push_back(label);
        double err = r.diverged || !r.abs_error ? cap : std::min(*r.abs_error, cap);
        series[label].emplace_back(r.n, std::max(err, kFloor));
    }
    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    for (const auto& [label, pts] : series) {
        for (const auto& [x, y] : pts) {
            x_lo = std::min(x_lo, std::log10(x));
            x_hi = std::max(x_hi, std::log10(x));
            y_lo = std::min(y_lo, std::log10(y));
            y_hi = std::max(y_hi, std::log10(y));
        }
    }
    x_lo = std::floor(x_lo * 10.0) / 10.0;
    x_hi = std::max(x_lo + 0.1, std::ceil(x_hi * 10.0) / 10.0);
    y_lo = std::floor(y_lo);
    y_hi = std::max(y_lo + 1.0, std::ceil(y_hi));
    const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (std::log10(x) - x_lo) / (x_hi - x_lo) * plot_w; };
    auto py = [&](double y) { return kTop + (y_hi - std::log10(y)) / (y_hi - y_lo) * plot_h; };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b", "#e377c2", "#17becf"};
    std::ostringstream svg;
    svg << std::fixed << std::setprecision(2);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w
        << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int e = static_cast<int>(y_lo); e <= static_cast<int>(y_hi); ++e) {
        const double y = py(std::pow(10.0, e));
        svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + 4
            << "\" text-anchor=\"end\">1e" << e << "</text>\n";
    }
    std::vector<int> ticks;
    for (const auto& r : rows) {
        if (std::find(ticks.begin(), ticks.end(), r.n) == ticks.end()) ticks.push_back(r.n);
    }
    for (int n : ticks) {
        svg << "<text x=\"" << px(n) << "\" y=\"" << kTop + plot_h + 16
            << "\" text-anchor=\"middle\">" << n << "</text>\n";
    }
    svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10
        << "\" text-anchor=\"middle\">n</text>\n";
    svg << "<text x=\"16\" y=\"" << kTop + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << kTop + plot_h / 2 << ")\">|error|</text>\n";
    for (std::size_t s = 0; s < order.size(); ++s) {
        const auto& pts = series[order[s]];
        const char* color = colors[s % std::size(colors)];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < pts.size(); ++k) {
            svg << (k ? " " : "") << px(pts[k].first) << ',' << py(pts[k].second);
        }
        svg << "\"/>\n";
        const double ly = kTop + 16 + 18.0 * static_cast<double>(s);
        svg << "<line x1=\"" << kWidth - kRight + 12 << "\" y1=\"" << ly - 4 << "\" x2=\""
            << kWidth - kRight + 32 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
            << "\" stroke-width=\"1.5\"/>\n";
        svg << "<text class=\"legend\" x=\"" << kWidth - kRight + 38 << "\" y=\"" << ly << "\">"
            << order[s] << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void emit_plot(const std::vector<StudyRow>& rows, const std::string& path, bool by_alpha,
               double cap) {
    write_text(path, format_plot(rows, by_alpha, cap));
}

}  // namespace qbsde
