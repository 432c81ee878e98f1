#pragma once

#include "qbsde/numerics.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace qbsde {

/// Stationary quantizer of N(0, 1): levels, Voronoi cell probabilities and
/// the mean squared quantization error.
struct QuantGrid1D {
    std::vector<double> points;
    std::vector<double> weights;
    double distortion = 0.0;

    std::size_t size() const { return points.size(); }
};

/// Finite support for the d-dimensional standard Gaussian. Nodes are stored
/// row-major: coordinate j of node k lives at nodes[k * dim + j].
struct QuantGridD {
    int dim = 1;
    int per_dim_points = 1;
    std::vector<double> nodes;
    std::vector<double> weights;
    /// Set when the grid is a Cartesian product of a 1-D grid; node k then has
    /// per-dimension digits in base per_dim_points, first coordinate most
    /// significant.
    bool is_product = false;
    QuantGrid1D base;

    std::size_t size() const { return weights.size(); }
    std::span<const double> node(std::size_t k) const {
        return {nodes.data() + k * static_cast<std::size_t>(dim),
                static_cast<std::size_t>(dim)};
    }
    /// Total mean squared quantization error E|Z - G(Z)|^2.
    double distortion() const;
};

struct LloydOptions {
    double tol = 1e-12;
    int max_iters = 100000;
};

/// Runs Lloyd's fixed-point iteration with exact Gaussian cell moments,
/// starting from the M equiprobable quantiles.
/// Throws Error for M == 0 and NumericalError if max_iters is exhausted.
QuantGrid1D build_gaussian_grid_1d(int M, LloydOptions options = {});

/// Largest |point - centroid of its Voronoi cell| over the grid.
double stationarity_residual(const QuantGrid1D& grid);

/// Mean squared error of quantizing N(0,1) onto the given sorted points.
double gaussian_distortion(std::span<const double> points);

/// d-fold Cartesian product of a 1-D grid.
QuantGridD product_grid(const QuantGrid1D& base, int d);

/// Node count m^d, checked for overflow before any allocation.
std::size_t product_node_count(std::size_t m, int d);

/// Fitted slope of log(total distortion) against log(total node count m^d),
/// building one product grid per entry of per_dim_points.
double grid_distortion_rate(int d, std::span<const int> per_dim_points);

/// Checks every QuantGrid invariant that can be verified on the data alone.
/// Throws Error naming the violated invariant.
void validate_grid(const QuantGrid1D& grid);
void validate_grid(const QuantGridD& grid);

/// Plain text cache: header "M d", then one row per node with d coordinates
/// and the weight, 17 significant digits.
void save_grid(const QuantGrid1D& grid, const std::filesystem::path& path);
void save_grid(const QuantGridD& grid, const std::filesystem::path& path);

/// Loads and validates a grid cache file. Any d is accepted.
QuantGridD load_grid(const std::filesystem::path& path);
/// Loads a d = 1 cache and recomputes the distortion.
QuantGrid1D load_grid_1d(const std::filesystem::path& path);

}  // namespace qbsde
