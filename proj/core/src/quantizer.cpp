#include "qbsde/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

namespace qbsde {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Probability, first and second moment of N(0,1) restricted to (a, b).
struct CellMoments {
    double mass;
    double first;
    double second;
};

double pdf_or_zero(double x) { return std::isinf(x) ? 0.0 : normal_pdf(x); }
double x_pdf_or_zero(double x) { return std::isinf(x) ? 0.0 : x * normal_pdf(x); }

CellMoments cell_moments(double a, double b) {
    double mass;
    if (a >= 0.0) {
        mass = normal_sf(a) - normal_sf(b);
    } else if (b <= 0.0) {
        mass = normal_cdf(b) - normal_cdf(a);
    } else {
        mass = 1.0 - normal_cdf(a) - normal_sf(b);
    }
    const double first = pdf_or_zero(a) - pdf_or_zero(b);
    const double second = mass + x_pdf_or_zero(a) - x_pdf_or_zero(b);
    return {mass, first, second};
}

double lower_edge(std::span<const double> p, std::size_t i) {
    return i == 0 ? -kInf : 0.5 * (p[i - 1] + p[i]);
}

double upper_edge(std::span<const double> p, std::size_t i) {
    return i + 1 == p.size() ? kInf : 0.5 * (p[i] + p[i + 1]);
}

void symmetrize(std::vector<double>& p) {
    const std::size_t m = p.size();
    for (std::size_t i = 0; i < m / 2; ++i) {
        const double v = 0.5 * (p[m - 1 - i] - p[i]);
        p[i] = -v;
        p[m - 1 - i] = v;
    }
    if (m % 2 == 1) {
        p[m / 2] = 0.0;
    }
}

void symmetrize_weights(std::vector<double>& w) {
    const std::size_t m = w.size();
    for (std::size_t i = 0; i < m / 2; ++i) {
        const double v = 0.5 * (w[i] + w[m - 1 - i]);
        w[i] = v;
        w[m - 1 - i] = v;
    }
}

// Newton on F_i(p) = p_i mass_i - first_i = 0, whose Jacobian is tridiagonal.
// Returns false if it fails to converge or loses ordering.
bool newton_polish(std::vector<double>& p, double tol) {
    const std::size_t m = p.size();
    std::vector<double> lower(m), diag(m), upper(m), rhs(m);
    for (int iter = 0; iter < 50; ++iter) {
        for (std::size_t i = 0; i < m; ++i) {
            const double a = lower_edge(p, i);
            const double b = upper_edge(p, i);
            const auto c = cell_moments(a, b);
            const double at_a = std::isinf(a) ? 0.0 : 0.5 * (p[i] - a) * normal_pdf(a);
            const double at_b = std::isinf(b) ? 0.0 : 0.5 * (p[i] - b) * normal_pdf(b);
            rhs[i] = -(p[i] * c.mass - c.first);
            diag[i] = c.mass + at_b - at_a;
            upper[i] = at_b;
            lower[i] = -at_a;
        }
        // Thomas algorithm.
        for (std::size_t i = 1; i < m; ++i) {
            const double w = lower[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        std::vector<double> step(m);
        step[m - 1] = rhs[m - 1] / diag[m - 1];
        for (std::size_t i = m - 1; i-- > 0;) {
            step[i] = (rhs[i] - upper[i] * step[i + 1]) / diag[i];
        }
        double moved = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            p[i] += step[i];
            moved = std::max(moved, std::abs(step[i]));
        }
        symmetrize(p);
        if (!std::isfinite(moved) || !std::is_sorted(p.begin(), p.end())) {
            return false;
        }
        if (moved < tol) {
            return true;
        }
    }
    return false;
}

[[noreturn]] void grid_error(const std::string& what) { throw Error("quantizer: " + what); }

}  // namespace

double gaussian_distortion(std::span<const double> points) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto c = cell_moments(lower_edge(points, i), upper_edge(points, i));
        const double p = points[i];
        total += c.second - 2.0 * p * c.first + p * p * c.mass;
    }
    return total;
}

double stationarity_residual(const QuantGrid1D& grid) {
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.points.size(); ++i) {
        const auto c = cell_moments(lower_edge(grid.points, i), upper_edge(grid.points, i));
        worst = std::max(worst, std::abs(grid.points[i] - c.first / c.mass));
    }
    return worst;
}

QuantGrid1D build_gaussian_grid_1d(int M, LloydOptions options) {
    if (M <= 0) {
        grid_error("number of points M must be at least 1");
    }
    if (!(options.tol > 0.0)) {
        grid_error("Lloyd tolerance must be positive");
    }
    const auto m = static_cast<std::size_t>(M);
    std::vector<double> p(m);
    for (std::size_t i = 0; i < m; ++i) {
        p[i] = normal_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(m));
    }
    symmetrize(p);

    std::vector<double> next(m);
    bool converged = false;
    constexpr int kNewtonEvery = 200;
    for (int iter = 0; iter < options.max_iters; ++iter) {
        if (iter > 0 && iter % kNewtonEvery == 0 && m > 1) {
            std::vector<double> trial = p;
            if (newton_polish(trial, options.tol)) {
                p.swap(trial);
                converged = true;
                break;
            }
        }
        double moved = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const auto c = cell_moments(lower_edge(p, i), upper_edge(p, i));
            next[i] = c.first / c.mass;
        }
        symmetrize(next);
        for (std::size_t i = 0; i < m; ++i) {
            moved = std::max(moved, std::abs(next[i] - p[i]));
        }
        p.swap(next);
        if (moved < options.tol) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        throw NumericalError("quantizer: Lloyd iteration did not converge for M=" +
                             std::to_string(M) + " within " +
                             std::to_string(options.max_iters) +
                             " iterations (tolerance too tight?)");
    }

    QuantGrid1D grid;
    grid.points = std::move(p);
    grid.weights.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        grid.weights[i] = cell_moments(lower_edge(grid.points, i), upper_edge(grid.points, i)).mass;
    }
    symmetrize_weights(grid.weights);
    grid.distortion = gaussian_distortion(grid.points);
    return grid;
}

std::size_t product_node_count(std::size_t m, int d) {
    if (d < 1) {
        grid_error("dimension must be at least 1");
    }
    std::size_t count = 1;
    for (int j = 0; j < d; ++j) {
        if (m != 0 && count > std::numeric_limits<std::size_t>::max() / m) {
            grid_error("product grid node count overflows");
        }
        count *= m;
    }
    return count;
}

QuantGridD product_grid(const QuantGrid1D& base, int d) {
    const std::size_t m = base.size();
    const std::size_t count = product_node_count(m, d);
    constexpr std::size_t kMaxNodes = std::size_t{1} << 26;
    if (count > kMaxNodes) {
        grid_error("product grid with " + std::to_string(count) + " nodes exceeds the limit of " +
                   std::to_string(kMaxNodes));
    }
    QuantGridD grid;
    grid.dim = d;
    grid.per_dim_points = static_cast<int>(m);
    grid.is_product = true;
    grid.base = base;
    grid.nodes.resize(count * static_cast<std::size_t>(d));
    grid.weights.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
        std::size_t rest = k;
        double w = 1.0;
        for (int j = d - 1; j >= 0; --j) {
            const std::size_t digit = rest % m;
            rest /= m;
            grid.nodes[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] =
                base.points[digit];
            w *= base.weights[digit];
        }
        grid.weights[k] = w;
    }
    return grid;
}

double QuantGridD::distortion() const {
    if (!is_product) {
        grid_error("distortion is only tracked for product grids");
    }
    return static_cast<double>(dim) * base.distortion;
}

double grid_distortion_rate(int d, std::span<const int> per_dim_points) {
    if (per_dim_points.size() < 3) {
        grid_error("distortion rate needs at least three grid sizes");
    }
    if (!std::is_sorted(per_dim_points.begin(), per_dim_points.end())) {
        grid_error("grid sizes must be increasing");
    }
    std::vector<double> sizes, distortions;
    for (int m : per_dim_points) {
        const auto base = build_gaussian_grid_1d(m);
        sizes.push_back(static_cast<double>(product_node_count(static_cast<std::size_t>(m), d)));
        distortions.push_back(static_cast<double>(d) * base.distortion);
    }
    try {
        return fit_loglog_slope(sizes, distortions);
    } catch (const NumericalError&) {
        throw NumericalError("quantizer: degenerate distortion fit (all grids identical?)");
    }
}

void validate_grid(const QuantGrid1D& grid) {
    const std::size_t m = grid.size();
    if (m == 0 || grid.weights.size() != m) {
        grid_error("points and weights must be non-empty and of equal length");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (!(grid.weights[i] > 0.0)) {
            grid_error("weight " + std::to_string(i) + " is not positive");
        }
        total += grid.weights[i];
        if (i > 0 && !(grid.points[i] > grid.points[i - 1])) {
            grid_error("points are not strictly increasing at index " + std::to_string(i));
        }
    }
    if (std::abs(total - 1.0) > 1e-12) {
        grid_error("weights sum to " + format_exact(total) + ", expected 1");
    }
    for (std::size_t i = 0; i < m; ++i) {
        if (std::abs(grid.points[i] + grid.points[m - 1 - i]) > 1e-10) {
            grid_error("points are not symmetric about 0");
        }
        if (std::abs(grid.weights[i] - grid.weights[m - 1 - i]) > 1e-10) {
            grid_error("weights are not palindromic");
        }
    }
    const double residual = stationarity_residual(grid);
    if (residual > 1e-9) {
        grid_error("grid is not stationary (residual " + format_exact(residual) + ")");
    }
}

void validate_grid(const QuantGridD& grid) {
    if (grid.dim < 1 || grid.per_dim_points < 1) {
        grid_error("dimension and per-dimension point count must be positive");
    }
    const std::size_t count =
        product_node_count(static_cast<std::size_t>(grid.per_dim_points), grid.dim);
    if (grid.weights.size() != count ||
        grid.nodes.size() != count * static_cast<std::size_t>(grid.dim)) {
        grid_error("node count does not equal m^d");
    }
    double total = 0.0;
    for (double w : grid.weights) {
        if (!(w > 0.0)) {
            grid_error("non-positive node weight");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        grid_error("weights sum to " + format_exact(total) + ", expected 1");
    }
    // Sign-flip symmetry, matched on coordinates rounded to 1e-10.
    using Key = std::vector<long long>;
    auto key_of = [&](std::size_t k, int flip) {
        Key key(static_cast<std::size_t>(grid.dim));
        for (int j = 0; j < grid.dim; ++j) {
            double c = grid.node(k)[static_cast<std::size_t>(j)];
            if (j == flip) {
                c = -c;
            }
            key[static_cast<std::size_t>(j)] = std::llround(c * 1e10);
        }
        return key;
    };
    std::map<Key, double> lookup;
    for (std::size_t k = 0; k < count; ++k) {
        lookup.emplace(key_of(k, -1), grid.weights[k]);
    }
    for (std::size_t k = 0; k < count; ++k) {
        for (int j = 0; j < grid.dim; ++j) {
            const auto it = lookup.find(key_of(k, j));
            if (it == lookup.end() || std::abs(it->second - grid.weights[k]) > 1e-10) {
                grid_error("grid is not symmetric under a sign flip of coordinate " +
                           std::to_string(j));
            }
        }
    }
    if (grid.is_product) {
        validate_grid(grid.base);
    }
}

namespace {

void write_rows(std::ofstream& out, std::size_t count, int dim,
                const std::function<double(std::size_t, int)>& coord,
                std::span<const double> weights) {
    out << count << ' ' << dim << '\n';
    for (std::size_t k = 0; k < count; ++k) {
        for (int j = 0; j < dim; ++j) {
            out << format_exact(coord(k, j)) << ' ';
        }
        out << format_exact(weights[k]) << '\n';
    }
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        grid_error("cannot open '" + path.string() + "' for writing");
    }
    return out;
}

// Recovers the 1-D factor of a grid stored in product order, if it is one.
bool recover_product_base(QuantGridD& grid) {
    const auto m = static_cast<std::size_t>(grid.per_dim_points);
    const auto d = static_cast<std::size_t>(grid.dim);
    QuantGrid1D base;
    base.points.resize(m);
    base.weights.assign(m, 0.0);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        base.weights[k % m] += grid.weights[k];
    }
    for (std::size_t l = 0; l < m; ++l) {
        base.points[l] = grid.nodes[l * d + (d - 1)];
    }
    for (std::size_t k = 0; k < grid.size(); ++k) {
        std::size_t rest = k;
        double w = 1.0;
        for (std::size_t j = d; j-- > 0;) {
            const std::size_t digit = rest % m;
            rest /= m;
            if (grid.nodes[k * d + j] != base.points[digit]) {
                return false;
            }
            w *= base.weights[digit];
        }
        if (std::abs(w - grid.weights[k]) > 1e-15 * std::max(1.0, w)) {
            return false;
        }
    }
    base.distortion = gaussian_distortion(base.points);
    grid.base = std::move(base);
    grid.is_product = true;
    return true;
}

}  // namespace

void save_grid(const QuantGrid1D& grid, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    write_rows(out, grid.size(), 1, [&](std::size_t k, int) { return grid.points[k]; },
               grid.weights);
    if (!out) {
        grid_error("write to '" + path.string() + "' failed");
    }
}

void save_grid(const QuantGridD& grid, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    write_rows(out, grid.size(), grid.dim,
               [&](std::size_t k, int j) { return grid.node(k)[static_cast<std::size_t>(j)]; },
               grid.weights);
    if (!out) {
        grid_error("write to '" + path.string() + "' failed");
    }
}

QuantGridD load_grid(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        grid_error("cannot open '" + path.string() + "'");
    }
    const std::string where = "grid file '" + path.string() + "': ";
    std::string line;
    if (!std::getline(in, line)) {
        grid_error(where + "missing header row \"M d\"");
    }
    long long count_raw = 0, dim_raw = 0;
    {
        std::istringstream header(line);
        std::string extra;
        if (!(header >> count_raw >> dim_raw) || (header >> extra) || count_raw < 1 ||
            dim_raw < 1) {
            grid_error(where + "malformed header row \"" + line + "\"");
        }
    }
    const auto count = static_cast<std::size_t>(count_raw);
    QuantGridD grid;
    grid.dim = static_cast<int>(dim_raw);
    grid.nodes.reserve(count * static_cast<std::size_t>(grid.dim));
    grid.weights.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        if (!std::getline(in, line)) {
            grid_error(where + "missing row " + std::to_string(k + 1) + " of " +
                       std::to_string(count));
        }
        std::istringstream row(line);
        double value = 0.0;
        std::vector<double> fields;
        while (row >> value) {
            fields.push_back(value);
        }
        if (!row.eof() || fields.size() != static_cast<std::size_t>(grid.dim) + 1) {
            grid_error(where + "row " + std::to_string(k + 1) + " must hold " +
                       std::to_string(grid.dim + 1) + " numbers");
        }
        grid.nodes.insert(grid.nodes.end(), fields.begin(), fields.end() - 1);
        grid.weights.push_back(fields.back());
    }
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
            grid_error(where + "unexpected data after row " + std::to_string(count));
        }
    }
    const double root = std::pow(static_cast<double>(count), 1.0 / grid.dim);
    grid.per_dim_points = static_cast<int>(std::lround(root));
    if (product_node_count(static_cast<std::size_t>(grid.per_dim_points), grid.dim) != count) {
        grid_error(where + "node count " + std::to_string(count) + " is not a perfect power m^" +
                   std::to_string(grid.dim));
    }
    recover_product_base(grid);
    validate_grid(grid);
    return grid;
}

QuantGrid1D load_grid_1d(const std::filesystem::path& path) {
    auto grid = load_grid(path);
    if (grid.dim != 1) {
        grid_error("grid file '" + path.string() + "' has dimension " + std::to_string(grid.dim) +
                   ", expected 1");
    }
    return grid.base;
}

}  // namespace qbsde
