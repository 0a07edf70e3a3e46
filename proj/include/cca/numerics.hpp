// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cca/matrix.hpp"

namespace cca {

/// Rotary embedding settings. `head_dim` must be even; pairs (2i, 2i+1) rotate together.
struct RopeParams {
    double base = 10000.0;
    std::size_t head_dim = 0;
    bool enabled = false;

    void validate() const;
};

/// Softmax with max-subtraction. Throws "empty softmax" / "non-finite score".
std::vector<double> stable_softmax(std::span<const double> scores);
void stable_softmax_inplace(std::span<double> scores);

/// Rotates `v` (length head_dim) by the angles for `position` (0-based; position 0 is the identity).
std::vector<double> apply_rope(std::span<const double> v, std::size_t position, const RopeParams& params);
/// In-place rotation. `inverse` applies the transpose (rotation by the negated angles).
void apply_rope_inplace(std::span<double> v, std::size_t position, const RopeParams& params, bool inverse = false);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h over every coordinate.
std::vector<double> finite_diff_grad(const ScalarFunction& f, std::span<const double> x, double h);
/// Same, restricted to `coordinates`; result[k] is the partial for coordinates[k].
std::vector<double> finite_diff_grad(const ScalarFunction& f, std::span<const double> x, double h,
                                     std::span<const std::size_t> coordinates);

/**
 * xorshift64* generator seeded through splitmix64.
 *
 *   state  = splitmix64(seed)            (0 is remapped to a fixed odd constant)
 *   state ^= state >> 12; state ^= state << 25; state ^= state >> 27
 *   output = state * 0x2545F4914F6CDD1D
 *
 * uniform() maps the top 53 output bits to [0, 1).
 */
class Xorshift64Star {
public:
    explicit Xorshift64Star(std::uint64_t seed);

    std::uint64_t next() noexcept;
    double uniform() noexcept;
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) noexcept;

private:
    std::uint64_t state_;
};

/// Entries uniform on [-scale, scale), drawn row-major from Xorshift64Star(seed).
Matrix seeded_init(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale);

}  // namespace cca
