// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "cca/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cca {

void RopeParams::validate() const {
    if (!enabled) {
        return;
    }
    if (head_dim == 0 || head_dim % 2 != 0) {
        throw Error("rope head_dim must be even and positive, got " + std::to_string(head_dim));
    }
    if (!(base > 1.0) || !std::isfinite(base)) {
        throw Error("rope base must be finite and > 1");
    }
}

void stable_softmax_inplace(std::span<double> scores) {
    if (scores.empty()) {
        throw Error("empty softmax");
    }
    double peak = -INFINITY;
    for (double s : scores) {
        if (!std::isfinite(s)) {
            throw Error("non-finite score");
        }
        peak = std::max(peak, s);
    }
    double total = 0.0;
    for (double& s : scores) {
        s = std::exp(s - peak);
        total += s;
    }
    const double inv = 1.0 / total;
    for (double& s : scores) {
        s *= inv;
    }
}

std::vector<double> stable_softmax(std::span<const double> scores) {
    std::vector<double> out(scores.begin(), scores.end());
    stable_softmax_inplace(out);
    return out;
}

void apply_rope_inplace(std::span<double> v, std::size_t position, const RopeParams& params, bool inverse) {
    if (v.size() % 2 != 0) {
        throw Error("rope needs an even-length vector, got " + std::to_string(v.size()));
    }
    if (!params.enabled || position == 0) {
        return;
    }
    if (v.size() != params.head_dim) {
        throw Error("rope vector length " + std::to_string(v.size()) + " != head_dim " +
                    std::to_string(params.head_dim));
    }
    const double dim = static_cast<double>(params.head_dim);
    const double pos = static_cast<double>(position);
    for (std::size_t i = 0; i < v.size() / 2; ++i) {
        const double freq = std::pow(params.base, -2.0 * static_cast<double>(i) / dim);
        const double angle = inverse ? -pos * freq : pos * freq;
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double x0 = v[2 * i];
        const double x1 = v[2 * i + 1];
        v[2 * i] = x0 * c - x1 * s;
        v[2 * i + 1] = x0 * s + x1 * c;
    }
}

std::vector<double> apply_rope(std::span<const double> v, std::size_t position, const RopeParams& params) {
    std::vector<double> out(v.begin(), v.end());
    apply_rope_inplace(out, position, params);
    return out;
}

std::vector<double> finite_diff_grad(const ScalarFunction& f, std::span<const double> x, double h,
                                     std::span<const std::size_t> coordinates) {
    if (!(h > 0.0)) {
        throw Error("finite difference step must be positive");
    }
    std::vector<double> point(x.begin(), x.end());
    std::vector<double> grad;
    grad.reserve(coordinates.size());
    for (std::size_t i : coordinates) {
        if (i >= point.size()) {
            throw Error("finite difference coordinate " + std::to_string(i) + " out of range");
        }
        const double saved = point[i];
        point[i] = saved + h;
        const double up = f(point);
        point[i] = saved - h;
        const double down = f(point);
        point[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw Error("non-finite function value at coordinate " + std::to_string(i));
        }
        grad.push_back((up - down) / (2.0 * h));
    }
    return grad;
}

std::vector<double> finite_diff_grad(const ScalarFunction& f, std::span<const double> x, double h) {
    std::vector<std::size_t> all(x.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        all[i] = i;
    }
    return finite_diff_grad(f, x, h, all);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

Xorshift64Star::Xorshift64Star(std::uint64_t seed) : state_(splitmix64(seed)) {
    if (state_ == 0) {
        state_ = 0x9E3779B97F4A7C15ULL;
    }
}

std::uint64_t Xorshift64Star::next() noexcept {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
}

double Xorshift64Star::uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::uint64_t Xorshift64Star::below(std::uint64_t bound) noexcept {
    // Modulo bias is below 2^-40 for the bounds used here.
    return bound == 0 ? 0 : next() % bound;
}

Matrix seeded_init(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale) {
    if (rows == 0 || cols == 0) {
        throw Error("seeded_init needs a non-empty shape");
    }
    if (!(scale > 0.0)) {
        throw Error("seeded_init scale must be positive");
    }
    Xorshift64Star rng(seed);
    Matrix out(rows, cols);
    for (double& x : out.values()) {
        x = (2.0 * rng.uniform() - 1.0) * scale;
    }
    return out;
}

}  // namespace cca
