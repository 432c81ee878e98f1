#include "qbsde/backward.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>

namespace qbsde {

namespace {

// Lloyd grids are deterministic in m; build each one once per process.
const QuantGrid1D& cached_gaussian_grid(int m) {
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<QuantGrid1D>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[m];
    if (!slot) {
        slot = std::make_unique<QuantGrid1D>(build_gaussian_grid_1d(m));
    }
    return *slot;
}

std::string describe_point(std::span<const double> x) {
    std::ostringstream out;
    out << '(';
    for (std::size_t j = 0; j < x.size(); ++j) {
        out << (j ? ", " : "") << x[j];
    }
    out << ')';
    return out.str();
}

}  // namespace

int SchemeParams::per_dim_points(int d) const {
    if (M < 1) {
        throw Error("scheme: quantizer size M must be at least 1");
    }
    const auto m = static_cast<int>(std::lround(std::pow(static_cast<double>(M), 1.0 / d)));
    return std::max(1, m);
}

SchemeParams default_params(const Problem& problem, int n) {
    SchemeParams p;
    p.n = n;
    p.M = problem.defaults.M;
    p.delta = problem.defaults.delta;
    p.kappa = problem.defaults.kappa;
    return p;
}

SchemeParams theoretical_params(const Problem& problem, int n, double alpha, double eta) {
    if (n < 1 || !(eta > 0.0)) {
        throw Error("theoretical_params: need n >= 1 and eta > 0");
    }
    SchemeParams p = default_params(problem, n);
    const double nn = static_cast<double>(n);
    p.delta = std::pow(nn, -1.5);
    p.kappa = static_cast<int>(std::ceil(std::pow(nn, 1.5 + eta)));
    p.M = static_cast<int>(std::ceil(std::pow(nn, (1.0 + alpha) * problem.dim)));
    p.truncation = TruncationPolicy::adaptive(alpha);
    return p;
}

NonFiniteFieldError::NonFiniteFieldError(int time_index_, std::size_t point_index_,
                                         std::vector<double> point_)
    : NumericalError("non-finite value in field at step " + std::to_string(time_index_) +
                     ", point " + describe_point(point_)),
      time_index(time_index_),
      point_index(point_index_),
      point(std::move(point_)) {}

PicardResult picard_solve(double y_guess, double e, std::span<const double> x,
                          std::span<const double> v, const Driver& f, double h, double tol,
                          int max_iters) {
    if (h * f.lipschitz_Ky >= 1.0) {
        throw NumericalError("picard_solve: h K_y >= 1, the implicit step is not a contraction");
    }
    double y = e + h * f(x, y_guess, v);
    if (f.y_independent()) {
        return {y, 1};
    }
    for (int it = 2; it <= max_iters; ++it) {
        const double next = e + h * f(x, y, v);
        const double change = std::abs(next - y);
        y = next;
        if (change < tol * (1.0 + std::abs(y))) {
            return {y, it};
        }
        if (!std::isfinite(y)) {
            return {y, it};
        }
    }
    throw NumericalError("picard_solve: no convergence within " + std::to_string(max_iters) +
                         " iterations at x = " + describe_point(x));
}

BackwardScheme::BackwardScheme(const Problem& problem, const SchemeParams& params)
    : problem_(problem),
      params_(params),
      lattice_(problem.x0, params.delta, params.kappa),
      time_grid_(params.n, problem.T) {
    if (problem.dim < 1 || problem.coeffs.dim != problem.dim ||
        problem.x0.size() != static_cast<std::size_t>(problem.dim)) {
        throw Error("scheme: problem dimension is inconsistent");
    }
    if (!problem.g.eval || !problem.driver.eval) {
        throw Error("scheme: problem is missing g or the driver");
    }
    if (params.workers < 1) {
        throw Error("scheme: worker count must be at least 1");
    }
    const int m = params.per_dim_points(problem.dim);
    grid_ = product_grid(cached_gaussian_grid(m), problem.dim);

    if (params.n >= 1) {
        levels_ = params.truncation.resolve(params.n);
    }
    if (levels_.truncated()) {
        radius_ = qbsde::truncation_radius(params.truncation, problem.driver.local_lipschitz_L,
                                          levels_.N)
                      .radius;
        driver_ = truncate_driver(problem.driver, radius_);
    } else {
        radius_ = std::numeric_limits<double>::infinity();
        driver_ = problem.driver;
    }
    if (params.n >= 1 && time_grid_.step(0) * driver_.lipschitz_Ky >= 1.0) {
        throw Error("scheme: h K_y >= 1, increase n");
    }

    const bool axis_ok = problem.coeffs.axis.has_value() && grid_.is_product;
    switch (params.kernel) {
    case KernelChoice::general: use_axis_ = false; break;
    case KernelChoice::axis:
        if (!axis_ok) {
            throw Error("scheme: axis kernel needs per-axis coefficients and a product grid");
        }
        use_axis_ = true;
        break;
    case KernelChoice::automatic: use_axis_ = axis_ok; break;
    }
}

ValueField BackwardScheme::terminal_field() const {
    ValueField field;
    field.time_index = params_.n;
    field.dim = problem_.dim;
    const std::size_t points = lattice_.size();
    const auto d = static_cast<std::size_t>(problem_.dim);
    field.u.resize(points);
    field.v.assign(points * d, 0.0);
    parallel_for(points, params_.workers, [&](std::size_t begin, std::size_t end) {
        std::vector<double> x(d);
        for (std::size_t idx = begin; idx < end; ++idx) {
            lattice_.decode_into(idx, x);
            field.u[idx] = problem_.g(x);
        }
    });
    return field;
}

void BackwardScheme::expectations_general(const ValueField& next, int i, std::vector<double>& e,
                                          std::vector<double>& v) const {
    const auto d = static_cast<std::size_t>(problem_.dim);
    const double h = time_grid_.step(i);
    const double sqrt_h = std::sqrt(h);
    const std::size_t nodes = grid_.size();

    // Quantized increments and their weights depend on the node only.
    std::vector<double> increments(nodes * d), weights_h(nodes * d);
    for (std::size_t k = 0; k < nodes; ++k) {
        for (std::size_t l = 0; l < d; ++l) {
            increments[k * d + l] = sqrt_h * grid_.node(k)[l];
            weights_h[k * d + l] = grid_.node(k)[l] / sqrt_h;
        }
        if (levels_.truncated()) {
            const auto clamped = clamp_weights({weights_h.data() + k * d, d}, levels_.R, h);
            std::copy(clamped.begin(), clamped.end(), weights_h.begin() + static_cast<std::ptrdiff_t>(k * d));
        }
    }

    parallel_for(lattice_.size(), params_.workers, [&](std::size_t begin, std::size_t end) {
        std::vector<double> x(d), drift(d), sigma(d * d), y(d), acc(d);
        for (std::size_t idx = begin; idx < end; ++idx) {
            lattice_.decode_into(idx, x);
            problem_.coeffs.drift(x, drift);
            problem_.coeffs.diffusion(x, sigma);
            double mean = 0.0;
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t k = 0; k < nodes; ++k) {
                const double* dw = increments.data() + k * d;
                for (std::size_t j = 0; j < d; ++j) {
                    double s = x[j] + h * drift[j];
                    for (std::size_t l = 0; l < d; ++l) {
                        s += sigma[j * d + l] * dw[l];
                    }
                    y[j] = s;
                }
                const double wu = grid_.weights[k] * next.u[lattice_.project_index(y)];
                mean += wu;
                for (std::size_t l = 0; l < d; ++l) {
                    acc[l] += wu * weights_h[k * d + l];
                }
            }
            e[idx] = mean;
            std::copy(acc.begin(), acc.end(), v.begin() + static_cast<std::ptrdiff_t>(idx * d));
        }
    });
}

void BackwardScheme::expectations_axis(const ValueField& next, int i, std::vector<double>& e,
                                       std::vector<double>& v) const {
    const int dim = problem_.dim;
    const auto d = static_cast<std::size_t>(dim);
    const double h = time_grid_.step(i);
    const double sqrt_h = std::sqrt(h);
    const QuantGrid1D& base = grid_.base;
    const std::size_t m = base.size();
    const std::size_t axis = lattice_.axis_size();
    const std::size_t points = lattice_.size();
    const auto& coeffs = *problem_.coeffs.axis;

    // successor[j][q * m + l]: axis position reached from position q with node l.
    std::vector<std::vector<std::uint32_t>> successor(d, std::vector<std::uint32_t>(axis * m));
    for (int j = 0; j < dim; ++j) {
        const auto& b = coeffs.drift[static_cast<std::size_t>(j)];
        const auto& s = coeffs.vol[static_cast<std::size_t>(j)];
        for (std::size_t q = 0; q < axis; ++q) {
            const double x = lattice_.axis_value(j, q);
            const double drifted = x + h * b(x);
            const double vol = s(x);
            for (std::size_t l = 0; l < m; ++l) {
                const double y = drifted + vol * (sqrt_h * base.points[l]);
                successor[static_cast<std::size_t>(j)][q * m + l] =
                    static_cast<std::uint32_t>(lattice_.project_axis(j, y));
            }
        }
    }
    std::vector<double> weight_plain(base.weights);
    std::vector<double> weight_h(m);
    for (std::size_t l = 0; l < m; ++l) {
        double hw = base.points[l] / sqrt_h;
        if (levels_.truncated()) {
            const double bound = levels_.R / sqrt_h;
            hw = std::clamp(hw, -bound, bound);
        }
        weight_h[l] = base.weights[l] * hw;
    }

    auto contract = [&](const std::vector<double>& src, std::vector<double>& dst, int j,
                        const std::vector<double>& coef) {
        const std::size_t stride = lattice_.stride(j);
        const auto& table = successor[static_cast<std::size_t>(j)];
        parallel_for(points, params_.workers, [&](std::size_t begin, std::size_t end) {
            for (std::size_t idx = begin; idx < end; ++idx) {
                const std::size_t q = (idx / stride) % axis;
                const std::size_t root = idx - q * stride;
                const std::uint32_t* succ = table.data() + q * m;
                double sum = 0.0;
                for (std::size_t l = 0; l < m; ++l) {
                    sum += coef[l] * src[root + succ[l] * stride];
                }
                dst[idx] = sum;
            }
        });
    };

    std::vector<double> a(points), b(points);
    // Chain c = -1 gives E[u]; chain c = l weights axis l by H.
    for (int c = -1; c < dim; ++c) {
        const std::vector<double>* src = &next.u;
        for (int j = 0; j < dim; ++j) {
            std::vector<double>& dst = (j % 2 == 0) ? a : b;
            contract(*src, dst, j, j == c ? weight_h : weight_plain);
            src = &dst;
        }
        if (c < 0) {
            std::copy(src->begin(), src->end(), e.begin());
        } else {
            for (std::size_t idx = 0; idx < points; ++idx) {
                v[idx * d + static_cast<std::size_t>(c)] = (*src)[idx];
            }
        }
    }
}

ValueField BackwardScheme::step(const ValueField& next, NonFinitePolicy policy) const {
    if (next.time_index < 1 || next.time_index > params_.n) {
        throw Error("backward_step: field time index out of range");
    }
    const std::size_t points = lattice_.size();
    const auto d = static_cast<std::size_t>(problem_.dim);
    if (next.u.size() != points || next.v.size() != points * d) {
        throw Error("backward_step: field does not match the lattice");
    }
    const int i = next.time_index - 1;
    const double h = time_grid_.step(i);

    ValueField out;
    out.time_index = i;
    out.dim = problem_.dim;
    out.u.resize(points);
    out.v.resize(points * d);
    if (use_axis_) {
        expectations_axis(next, i, out.u, out.v);
    } else {
        expectations_general(next, i, out.u, out.v);
    }

    const int workers = params_.workers;
    const std::size_t chunks = static_cast<std::size_t>(workers);
    std::vector<int> max_iters(chunks + 1, 0);
    std::vector<std::size_t> first_bad(chunks + 1, points);
    parallel_for(points, workers, [&](std::size_t begin, std::size_t end) {
        const std::size_t slot = std::min(chunks, begin * chunks / points);
        std::vector<double> x(d);
        for (std::size_t idx = begin; idx < end; ++idx) {
            lattice_.decode_into(idx, x);
            const double e = out.u[idx];
            PicardResult r;
            try {
                r = picard_solve(e, e, x, out.v_at(idx), driver_, h, params_.picard_tol,
                                 params_.picard_max_iters);
            } catch (const NumericalError& err) {
                throw NumericalError(std::string(err.what()) + " (step " + std::to_string(i) + ")");
            }
            out.u[idx] = r.value;
            max_iters[slot] = std::max(max_iters[slot], r.iterations);
            if (!std::isfinite(r.value) && first_bad[slot] == points) {
                first_bad[slot] = idx;
            }
        }
    });

    last_stats_ = {};
    last_stats_.max_picard_iterations = *std::max_element(max_iters.begin(), max_iters.end());
    const std::size_t bad = *std::min_element(first_bad.begin(), first_bad.end());
    if (bad != points) {
        last_stats_.first_non_finite = bad;
        if (policy == NonFinitePolicy::raise) {
            throw NonFiniteFieldError(i, bad, lattice_.decode(bad));
        }
    }
    return out;
}

ValueField backward_step(const BackwardScheme& scheme, const ValueField& next) {
    return scheme.step(next, NonFinitePolicy::raise);
}

SolveResult solve(const Problem& problem, const SchemeParams& params) {
    const auto start = std::chrono::steady_clock::now();
    const BackwardScheme scheme(problem, params);
    SolveResult result;
    result.params = params;
    auto& diag = result.diagnostics;
    diag.levels = scheme.levels();
    diag.truncation_radius = scheme.truncation_radius();
    diag.per_dim_points = scheme.grid().per_dim_points;
    diag.lattice_points = scheme.lattice().size();
    diag.kernel = scheme.uses_axis_kernel() ? "axis" : "general";
    if (params.n >= 1) {
        const double h = scheme.time_grid().step(0);
        std::optional<double> radius;
        if (diag.levels.truncated()) {
            radius = diag.truncation_radius;
            diag.radius_degenerate = diag.truncation_radius == 0.0;
        }
        diag.stability = stability_diagnostic(params.n, h, diag.levels.R, diag.levels.N,
                                              problem.driver.local_lipschitz_L, problem.dim, radius);
    }

    auto sup_abs = [](const std::vector<double>& u) {
        double s = 0.0;
        for (double value : u) {
            s = std::isnan(value) ? value : std::max(s, std::abs(value));
            if (std::isnan(s)) break;
        }
        return s;
    };

    diag.sup_abs_u.assign(static_cast<std::size_t>(params.n) + 1, 0.0);
    ValueField field = scheme.terminal_field();
    diag.sup_abs_u[static_cast<std::size_t>(params.n)] = sup_abs(field.u);
    if (params.keep_fields) {
        result.fields.push_back(field);
    }
    for (int i = params.n - 1; i >= 0; --i) {
        field = scheme.step(field, NonFinitePolicy::record);
        const auto& stats = scheme.last_step_stats();
        diag.max_picard_iterations = std::max(diag.max_picard_iterations, stats.max_picard_iterations);
        if (stats.first_non_finite && !diag.non_finite_step) {
            diag.non_finite_step = i;
            diag.non_finite_point = scheme.lattice().decode(*stats.first_non_finite);
        }
        diag.sup_abs_u[static_cast<std::size_t>(i)] = sup_abs(field.u);
        if (params.keep_fields) {
            result.fields.push_back(field);
        }
    }
    if (params.keep_fields) {
        std::reverse(result.fields.begin(), result.fields.end());
    }
    const std::size_t center = scheme.lattice().center_index();
    result.y0 = field.u[center];
    const auto z = field.v_at(center);
    result.z0.assign(z.begin(), z.end());
    diag.diverged = !std::isfinite(result.y0);
    result.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::string to_json(const SolveResult& result, const Problem& problem) {
    using nlohmann::json;
    auto number = [](double x) -> json { return std::isfinite(x) ? json(x) : json(nullptr); };
    const auto& p = result.params;
    const auto& diag = result.diagnostics;
    json z0 = json::array();
    for (double c : result.z0) z0.push_back(number(c));
    json sup = json::array();
    for (double s : diag.sup_abs_u) sup.push_back(number(s));
    json doc;
    doc["model"] = problem.name;
    doc["y0"] = number(result.y0);
    doc["z0"] = z0;
    doc["n"] = p.n;
    doc["alpha"] = p.truncation.mode == TruncationMode::adaptive ? json(p.truncation.alpha) : json(nullptr);
    doc["M"] = static_cast<long long>(std::llround(std::pow(diag.per_dim_points, problem.dim)));
    doc["delta"] = p.delta;
    doc["kappa"] = p.kappa;
    doc["truncation"] = to_string(p.truncation.mode);
    doc["radius_rule"] = to_string(p.truncation.radius_rule);
    doc["diagnostics"] = {
        {"N", number(diag.levels.N)},
        {"R", number(diag.levels.R)},
        {"truncation_radius", number(diag.truncation_radius)},
        {"radius_degenerate", diag.radius_degenerate},
        {"stability", to_string(diag.stability.status)},
        {"stability_value", number(diag.stability.value)},
        {"per_dim_points", diag.per_dim_points},
        {"lattice_points", diag.lattice_points},
        {"kernel", diag.kernel},
        {"max_picard_iterations", diag.max_picard_iterations},
        {"sup_abs_u", sup},
        {"diverged", diag.diverged},
    };
    if (diag.non_finite_step) {
        doc["diagnostics"]["non_finite_step"] = *diag.non_finite_step;
        doc["diagnostics"]["non_finite_point"] = *diag.non_finite_point;
    }
    doc["runtime_ms"] = result.runtime_ms;
    return doc.dump(2);
}

namespace {

struct OracleContext {
    const Problem& problem;
    const BackwardScheme& scheme;
    double tol;
    int max_iters;
};

double oracle_value(const OracleContext& ctx, int i, const std::vector<double>& x) {
    const auto& scheme = ctx.scheme;
    if (i == scheme.params().n) {
        return ctx.problem.g(x);
    }
    const double h = scheme.time_grid().step(i);
    const auto transitions = transition_support(ctx.problem.coeffs, scheme.lattice(), scheme.grid(),
                                                x, h, scheme.levels().R);
    const auto d = static_cast<std::size_t>(ctx.problem.dim);
    double mean = 0.0;
    std::vector<double> z(d, 0.0);
    for (const auto& t : transitions) {
        const double child = oracle_value(ctx, i + 1, scheme.lattice().decode(t.successor));
        mean += t.weight * child;
        for (std::size_t l = 0; l < d; ++l) {
            z[l] += t.weight * child * t.h_weight[l];
        }
    }
    return picard_solve(mean, mean, x, z, scheme.truncated_driver(), h, ctx.tol, ctx.max_iters).value;
}

}  // namespace

double naive_recursive_oracle(const Problem& problem, const SchemeParams& params,
                              std::size_t max_nodes) {
    const BackwardScheme scheme(problem, params);
    const double leaves = std::pow(static_cast<double>(scheme.grid().size()), params.n);
    if (leaves > static_cast<double>(max_nodes)) {
        throw Error("naive_recursive_oracle: path tree with " + format_exact(leaves) +
                    " leaves exceeds the limit of " + std::to_string(max_nodes));
    }
    const OracleContext ctx{problem, scheme, params.picard_tol, params.picard_max_iters};
    return oracle_value(ctx, 0, scheme.lattice().decode(scheme.lattice().center_index()));
}

}  // namespace qbsde
