// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "cca/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "cca/kernels.hpp"

namespace cca {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw Error("matrix data length " + std::to_string(data_.size()) + " does not match shape " +
                    std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw Error("ragged rows in Matrix::from_rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix Matrix::col_block(std::size_t first, std::size_t count) const {
    if (first + count > cols_) {
        throw Error("column block out of range");
    }
    Matrix out(rows_, count);
    for (std::size_t r = 0; r < rows_; ++r) {
        std::copy_n(data_.data() + r * cols_ + first, count, out.data() + r * count);
    }
    return out;
}

void Matrix::set_col_block(std::size_t first, const Matrix& block) {
    if (block.rows() != rows_ || first + block.cols() > cols_) {
        throw Error("column block shape mismatch");
    }
    for (std::size_t r = 0; r < rows_; ++r) {
        std::copy_n(block.data() + r * block.cols(), block.cols(), data_.data() + r * cols_ + first);
    }
}

Matrix Matrix::row_block(std::size_t first, std::size_t count) const {
    if (first + count > rows_) {
        throw Error("row block out of range");
    }
    std::vector<double> data(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_),
                             data_.begin() + static_cast<std::ptrdiff_t>((first + count) * cols_));
    return Matrix(count, cols_, std::move(data));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw Error("matmul shape mismatch: " + shape_string(a) + " * " + shape_string(b));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::span<double> dst = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik != 0.0) {
                kernels::axpy(aik, b.row(k), dst);
            }
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw Error("matmul_tn shape mismatch: " + shape_string(a) + "^T * " + shape_string(b));
    }
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki != 0.0) {
                kernels::axpy(aki, b.row(k), out.row(i));
            }
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw Error("matmul_nt shape mismatch: " + shape_string(a) + " * " + shape_string(b) + "^T");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            out(i, j) = kernels::dot(a.row(i), b.row(j));
        }
    }
    return out;
}

void add_inplace(Matrix& target, const Matrix& other) {
    if (target.rows() != other.rows() || target.cols() != other.cols()) {
        throw Error("add_inplace shape mismatch: " + shape_string(target) + " vs " + shape_string(other));
    }
    kernels::axpy(1.0, other.values(), target.values());
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error("max_abs_diff shape mismatch: " + shape_string(a) + " vs " + shape_string(b));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    }
    return worst;
}

std::string shape_string(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace cca
