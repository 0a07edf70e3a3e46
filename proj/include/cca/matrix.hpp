// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cca {

/// Error type for every contract violation raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * Dense row-major matrix of 64-bit reals.
 *
 * Used for token sequences (L x d), per-head projections (L x d_h), pooled
 * core tokens (m x d_h) and weight matrices alike. Rows are contiguous, so a
 * row can be handed to the kernels as a plain span.
 */
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    void fill(double value);
    bool all_finite() const noexcept;

    /// Columns [first, first + count) of every row, as a new matrix.
    Matrix col_block(std::size_t first, std::size_t count) const;
    /// Writes `block` into columns [first, first + block.cols()).
    void set_col_block(std::size_t first, const Matrix& block);
    /// Rows [first, first + count).
    Matrix row_block(std::size_t first, std::size_t count) const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

using TokenMatrix = Matrix;

Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

void add_inplace(Matrix& target, const Matrix& other);

/// Largest absolute entrywise difference; throws on shape mismatch.
double max_abs_diff(const Matrix& a, const Matrix& b);

std::string shape_string(const Matrix& m);

}  // namespace cca
