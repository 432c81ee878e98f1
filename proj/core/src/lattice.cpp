#include "qbsde/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace qbsde {

Lattice::Lattice(std::vector<double> center, double spacing, int half_width)
    : center_(std::move(center)), spacing_(spacing), half_width_(half_width) {
    if (center_.empty()) {
        throw Error("lattice: dimension must be at least 1");
    }
    if (!(spacing_ > 0.0) || !std::isfinite(spacing_)) {
        throw Error("lattice: spacing must be positive and finite");
    }
    if (half_width_ < 1) {
        throw Error("lattice: half-width kappa must be a positive integer");
    }
    axis_size_ = 2 * static_cast<std::size_t>(half_width_) + 1;
    strides_.assign(center_.size(), 1);
    size_ = 1;
    for (std::size_t j = center_.size(); j-- > 0;) {
        strides_[j] = size_;
        if (size_ > std::numeric_limits<std::size_t>::max() / axis_size_) {
            throw Error("lattice: point count overflows");
        }
        size_ *= axis_size_;
    }
}

std::size_t Lattice::project_axis(int j, double x) const {
    const double offset = x - center_[static_cast<std::size_t>(j)];
    const double box = half_width_ * spacing_;
    if (offset > box) {
        return axis_size_ - 1;
    }
    if (offset < -box) {
        return 0;
    }
    auto i = static_cast<long long>(std::floor(offset / spacing_ + 0.5));
    // |offset| <= kappa * delta can still round to kappa + 1 in the last ulp.
    i = std::clamp<long long>(i, -half_width_, half_width_);
    return static_cast<std::size_t>(i + half_width_);
}

double Lattice::axis_value(int j, std::size_t q) const {
    const auto i = static_cast<long long>(q) - half_width_;
    return spacing_ * static_cast<double>(i) + center_[static_cast<std::size_t>(j)];
}

std::vector<double> Lattice::project(std::span<const double> x) const {
    std::vector<double> out(center_.size());
    for (int j = 0; j < dim(); ++j) {
        out[static_cast<std::size_t>(j)] = axis_value(j, project_axis(j, x[static_cast<std::size_t>(j)]));
    }
    return out;
}

std::size_t Lattice::project_index(std::span<const double> x) const {
    std::size_t index = 0;
    for (int j = 0; j < dim(); ++j) {
        index += strides_[static_cast<std::size_t>(j)] * project_axis(j, x[static_cast<std::size_t>(j)]);
    }
    return index;
}

std::size_t Lattice::encode(std::span<const double> point) const {
    if (point.size() != center_.size()) {
        throw Error("lattice: point has dimension " + std::to_string(point.size()) +
                    ", expected " + std::to_string(center_.size()));
    }
    std::size_t index = 0;
    for (int j = 0; j < dim(); ++j) {
        const double value = point[static_cast<std::size_t>(j)];
        const std::size_t q = project_axis(j, value);
        if (axis_value(j, q) != value) {
            throw Error("lattice: coordinate " + std::to_string(j) + " value " +
                        format_exact(value) + " is not a lattice point");
        }
        index += strides_[static_cast<std::size_t>(j)] * q;
    }
    return index;
}

void Lattice::decode_into(std::size_t index, std::span<double> out) const {
    for (int j = 0; j < dim(); ++j) {
        const std::size_t q = (index / strides_[static_cast<std::size_t>(j)]) % axis_size_;
        out[static_cast<std::size_t>(j)] = axis_value(j, q);
    }
}

std::vector<double> Lattice::decode(std::size_t index) const {
    if (index >= size_) {
        throw Error("lattice: index " + std::to_string(index) + " out of range [0, " +
                    std::to_string(size_) + ")");
    }
    std::vector<double> out(center_.size());
    decode_into(index, out);
    return out;
}

std::size_t Lattice::center_index() const {
    std::size_t index = 0;
    for (std::size_t j = 0; j < center_.size(); ++j) {
        index += strides_[j] * static_cast<std::size_t>(half_width_);
    }
    return index;
}

}  // namespace qbsde
