#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace crsae {

// Dense row-major matrix of doubles. Rows are channels/filters, columns are
// samples.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v);
    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_string() const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Sparse codes for one window: C channels x N_e = W - K + 1 shifts.
class CodeMatrix : public Matrix {
public:
    using Matrix::Matrix;
    explicit CodeMatrix(Matrix m) : Matrix(std::move(m)) {}

    std::size_t channels() const { return rows(); }
    std::size_t shifts() const { return cols(); }
    std::size_t count_nonzero() const;
};

// dL/dh, same shape as the filter bank it differentiates.
class FilterGradient : public Matrix {
public:
    using Matrix::Matrix;
    explicit FilterGradient(Matrix m) : Matrix(std::move(m)) {}

    FilterGradient& operator+=(const FilterGradient& other);
    double max_abs() const;
};

// The trainable dictionary: C filters of length K. Immutable once built;
// updates produce a new bank.
class FilterBank {
public:
    FilterBank() = default;
    explicit FilterBank(Matrix filters);
    FilterBank(std::size_t count, std::size_t length, std::vector<double> values)
        : FilterBank(Matrix(count, length, std::move(values))) {}

    std::size_t count() const { return m_.rows(); }
    std::size_t length() const { return m_.cols(); }
    std::span<const double> filter(std::size_t c) const { return m_.row(c); }
    const Matrix& matrix() const { return m_; }
    double norm(std::size_t c) const;

    bool operator==(const FilterBank& other) const = default;

private:
    Matrix m_;
};

// One analysis window y_j.
struct SignalWindow {
    std::vector<double> samples;
    std::size_t index = 0;

    std::size_t size() const { return samples.size(); }
};

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double max_abs(std::span<const double> a);

}  // namespace crsae
