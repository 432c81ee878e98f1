#include "qbsde/oracle.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>

namespace qbsde {

namespace {

// Orthonormal Hermite polynomials for the N(0,1) measure:
// q_0 = 1, q_{k+1} = (x q_k - sqrt(k) q_{k-1}) / sqrt(k+1).
// Returns (q_n(x), q_{n-1}(x)).
std::pair<double, double> hermite_pair(int n, double x) {
    double prev = 0.0, cur = 1.0;
    for (int k = 0; k < n; ++k) {
        const double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) /
                            std::sqrt(static_cast<double>(k + 1));
        prev = cur;
        cur = next;
    }
    return {cur, prev};
}

}  // namespace

NormalRule gauss_hermite(int count) {
    if (count < 1) {
        throw Error("gauss_hermite: node count must be at least 1");
    }
    const int n = count;
    // Golub-Welsch: the nodes are the eigenvalues of the Jacobi matrix with
    // zero diagonal and off-diagonal sqrt(k).
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd off(std::max(n - 1, 0));
    for (int k = 1; k < n; ++k) {
        off[k - 1] = std::sqrt(static_cast<double>(k));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("gauss_hermite: eigenvalue iteration failed");
    }

    NormalRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double x = solver.eigenvalues()[i];
        // One Newton step for full relative accuracy of the root.
        const auto [qn, qn1] = hermite_pair(n, x);
        if (qn1 != 0.0 && std::isfinite(qn) && std::isfinite(qn1)) {
            const double dx = qn / (std::sqrt(static_cast<double>(n)) * qn1);
            if (std::abs(dx) < 1e-8 * (1.0 + std::abs(x))) {
                x -= dx;
            }
        }
        rule.nodes[static_cast<std::size_t>(i)] = x;
    }
    for (int i = 0; i < n / 2; ++i) {
        const double x = 0.5 * (rule.nodes[static_cast<std::size_t>(n - 1 - i)] -
                                rule.nodes[static_cast<std::size_t>(i)]);
        rule.nodes[static_cast<std::size_t>(i)] = -x;
        rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    }
    if (n % 2 == 1) {
        rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
    }
    // Christoffel weights 1 / (n q_{n-1}(x)^2); an overflowing q gives 0.
    for (int i = 0; i < n; ++i) {
        const double q = hermite_pair(n - 1, rule.nodes[static_cast<std::size_t>(i)]).first;
        rule.weights[static_cast<std::size_t>(i)] = 1.0 / (n * q * q);
    }
    for (int i = 0; i < n / 2; ++i) {
        const double w = 0.5 * (rule.weights[static_cast<std::size_t>(i)] +
                                rule.weights[static_cast<std::size_t>(n - 1 - i)]);
        rule.weights[static_cast<std::size_t>(i)] = w;
        rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
    }
    return rule;
}

NormalRule composite_legendre(int count, double z_max) {
    constexpr int q = 8;
    if (count < q) {
        throw Error("composite_legendre: node count must be at least 8");
    }
    if (!(z_max > 0.0)) {
        throw Error("composite_legendre: z_max must be positive");
    }
    // Gauss-Legendre on [-1, 1] by Golub-Welsch: off-diagonal k / sqrt(4k^2 - 1),
    // weights 2 v_0^2 from the normalized eigenvectors.
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(q);
    Eigen::VectorXd off(q - 1);
    for (int k = 1; k < q; ++k) {
        off[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, off, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("composite_legendre: eigenvalue iteration failed");
    }

    const int panels = count / q;
    const double width = 2.0 * z_max / panels;
    NormalRule rule;
    rule.nodes.reserve(static_cast<std::size_t>(panels * q));
    rule.weights.reserve(static_cast<std::size_t>(panels * q));
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double mid = -z_max + (p + 0.5) * width;
        for (int k = 0; k < q; ++k) {
            const double v0 = solver.eigenvectors()(0, k);
            const double z = mid + 0.5 * width * solver.eigenvalues()[k];
            const double w = 0.5 * width * 2.0 * v0 * v0 * normal_pdf(z);
            rule.nodes.push_back(z);
            rule.weights.push_back(w);
            total += w;
        }
    }
    for (double& w : rule.weights) w /= total;
    return rule;
}

std::string to_string(QuadratureKind kind) {
    return kind == QuadratureKind::gauss_hermite ? "gauss_hermite" : "composite_legendre";
}

namespace {

const NormalRule& cached_rule(QuadratureKind kind, int count) {
    static std::mutex mutex;
    static std::map<std::pair<QuadratureKind, int>, std::unique_ptr<NormalRule>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[{kind, count}];
    if (!slot) {
        slot = std::make_unique<NormalRule>(kind == QuadratureKind::gauss_hermite
                                                ? gauss_hermite(count)
                                                : composite_legendre(count));
    }
    return *slot;
}

}  // namespace

ReferenceSpec reference_spec(const Problem& problem, int nodes_per_dim) {
    if (!problem.cole_hopf) {
        throw Error("reference: model '" + problem.name + "' has no closed-form reference");
    }
    ReferenceSpec spec;
    spec.a = problem.cole_hopf->a;
    spec.nu = problem.cole_hopf->nu;
    spec.x0 = problem.x0;
    spec.g = problem.g.eval;
    spec.T = problem.T;
    spec.nodes_per_dim = nodes_per_dim;
    return spec;
}

double cole_hopf_quadrature(const ReferenceSpec& spec) {
    if (!(spec.a > 0.0)) {
        throw Error("reference: a must be positive");
    }
    if (spec.nodes_per_dim < 2) {
        throw Error("reference: need at least 2 nodes per dimension");
    }
    if (spec.x0.empty() || !spec.g) {
        throw Error("reference: x0 and g are required");
    }
    const auto& rule = cached_rule(spec.kind, spec.nodes_per_dim);
    const std::size_t d = spec.x0.size();

    // Nodes whose weight cannot affect the result are dropped; |a g| is
    // bounded on the support so a 1e-40 relative weight is far below
    // double precision.
    std::vector<double> weights;
    std::vector<double> factors;
    const double w_max = *std::max_element(rule.weights.begin(), rule.weights.end());
    const double drift = -0.5 * spec.nu * spec.nu * spec.T;
    const double scale = spec.nu * std::sqrt(spec.T);
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        if (rule.weights[k] > 1e-40 * w_max) {
            weights.push_back(rule.weights[k]);
            factors.push_back(std::exp(drift + scale * rule.nodes[k]));
        }
    }
    const std::size_t m = weights.size();
    std::size_t total = 1;
    for (std::size_t j = 0; j < d; ++j) total *= m;

    // Two passes: the maximum of a g for a stable log-sum-exp, then the sum
    // of w expm1(a (g - max)), accumulated in fixed index order.
    std::vector<double> x(d);
    auto visit = [&](auto&& consume) {
        for (std::size_t idx = 0; idx < total; ++idx) {
            std::size_t rest = idx;
            double w = 1.0;
            for (std::size_t j = d; j-- > 0;) {
                const std::size_t k = rest % m;
                rest /= m;
                x[j] = spec.x0[j] * factors[k];
                w *= weights[k];
            }
            consume(w, spec.a * spec.g(x));
        }
    };
    double top = -std::numeric_limits<double>::infinity();
    visit([&](double, double ag) { top = std::max(top, ag); });
    double acc = 0.0;
    visit([&](double w, double ag) { acc += w * std::expm1(ag - top); });
    return (top + std::log1p(acc)) / spec.a;
}

namespace {

ReferenceValue escalate(ReferenceSpec work, double tolerance, int max_nodes) {
    double previous = cole_hopf_quadrature(work);
    ReferenceValue out;
    out.kind = work.kind;
    out.y0 = previous;
    out.nodes_per_dim = work.nodes_per_dim;
    out.gap = std::numeric_limits<double>::infinity();
    while (work.nodes_per_dim * 2 <= max_nodes) {
        work.nodes_per_dim *= 2;
        const double value = cole_hopf_quadrature(work);
        out.gap = std::abs(value - previous);
        out.y0 = value;
        out.nodes_per_dim = work.nodes_per_dim;
        previous = value;
        if (out.gap <= tolerance) {
            out.converged = true;
            break;
        }
    }
    return out;
}

}  // namespace

ReferenceValue cole_hopf_y0(const ReferenceSpec& spec, double tolerance, int max_nodes) {
    const ReferenceValue first = escalate(spec, tolerance, max_nodes);
    if (first.converged) {
        return first;
    }
    if (spec.kind == QuadratureKind::composite_legendre) {
        return first;
    }
    ReferenceSpec composite = spec;
    composite.kind = QuadratureKind::composite_legendre;
    composite.nodes_per_dim = 256;
    const double d = static_cast<double>(spec.x0.size());
    const double cap = std::min(kMaxCompositeNodesPerDim,
                                std::floor(std::pow(kMaxTensorNodes, 1.0 / d) * (1.0 + 1e-12)));
    if (cap < 2 * composite.nodes_per_dim) {
        return first;
    }
    const ReferenceValue second = escalate(composite, tolerance, static_cast<int>(cap));
    return second.gap < first.gap ? second : first;
}

QuadratureCheck quadrature_self_check(const ReferenceSpec& spec) {
    QuadratureCheck check;
    check.value_m = cole_hopf_quadrature(spec);
    ReferenceSpec doubled = spec;
    doubled.nodes_per_dim *= 2;
    check.value_2m = cole_hopf_quadrature(doubled);
    check.gap = std::abs(check.value_2m - check.value_m);
    return check;
}

}  // namespace qbsde
