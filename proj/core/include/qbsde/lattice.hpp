#pragma once

#include "qbsde/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace qbsde {

/// Bounded uniform grid {X0 + delta * i : i in {-kappa..kappa}^d} together
/// with the nearest-point projection onto it and a row-major index map.
class Lattice {
public:
    Lattice(std::vector<double> center, double spacing, int half_width);

    int dim() const { return static_cast<int>(center_.size()); }
    double spacing() const { return spacing_; }
    int half_width() const { return half_width_; }
    const std::vector<double>& center() const { return center_; }

    /// Points per axis, 2 * kappa + 1.
    std::size_t axis_size() const { return axis_size_; }
    /// Total point count (2 * kappa + 1)^d.
    std::size_t size() const { return size_; }
    /// Flat-index stride of axis j.
    std::size_t stride(int j) const { return strides_[static_cast<std::size_t>(j)]; }

    /// Axis position in [0, 2 * kappa] of the projection of coordinate value
    /// x along axis j. Rounds with floor(u + 1/2) inside the box and clamps to
    /// the box faces outside it.
    std::size_t project_axis(int j, double x) const;
    /// Coordinate value of axis position q along axis j.
    double axis_value(int j, std::size_t q) const;

    /// Projection onto the lattice.
    std::vector<double> project(std::span<const double> x) const;
    /// Flat index of the projection of x.
    std::size_t project_index(std::span<const double> x) const;

    /// Flat index of a lattice point. Throws Error for off-lattice points.
    std::size_t encode(std::span<const double> point) const;
    /// Lattice point of a flat index. Throws Error when out of range.
    std::vector<double> decode(std::size_t index) const;
    /// Writes the lattice point of index into out (size d), without checks.
    void decode_into(std::size_t index, std::span<double> out) const;

    /// Index of the center X0.
    std::size_t center_index() const;

private:
    std::vector<double> center_;
    double spacing_;
    int half_width_;
    std::size_t axis_size_;
    std::size_t size_;
    std::vector<std::size_t> strides_;
};

}  // namespace qbsde
