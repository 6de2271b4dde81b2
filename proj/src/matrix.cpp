#include "crsae/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "crsae/errors.hpp"

namespace crsae {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionError("matrix payload has " + std::to_string(data_.size()) +
                             " values, shape " + shape_string() + " needs " +
                             std::to_string(rows_ * cols_));
    }
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

std::size_t CodeMatrix::count_nonzero() const {
    return static_cast<std::size_t>(
        std::count_if(data().begin(), data().end(), [](double v) { return v != 0.0; }));
}

FilterGradient& FilterGradient::operator+=(const FilterGradient& other) {
    if (!same_shape(other)) {
        throw DimensionError("gradient shapes differ: " + shape_string() + " vs " +
                             other.shape_string());
    }
    auto dst = flat();
    auto src = other.flat();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    return *this;
}

double FilterGradient::max_abs() const { return crsae::max_abs(flat()); }

FilterBank::FilterBank(Matrix filters) : m_(std::move(filters)) {
    if (m_.rows() < 1 || m_.cols() < 1) {
        throw std::invalid_argument("filter bank needs C >= 1 and K >= 1, got " +
                                    m_.shape_string());
    }
    for (double v : m_.flat()) {
        if (!std::isfinite(v)) throw std::invalid_argument("filter bank has non-finite entries");
    }
}

double FilterBank::norm(std::size_t c) const { return std::sqrt(squared_norm(filter(c))); }

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot product of lengths " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double squared_norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

double max_abs(std::span<const double> a) {
    double m = 0.0;
    bool nan = false;
    for (double v : a) {
        nan |= std::isnan(v);
        m = std::max(m, std::abs(v));
    }
    return nan ? std::nan("") : m;
}

}  // namespace crsae
