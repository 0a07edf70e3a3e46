// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "cca/kernels.hpp"

namespace cca::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void scores(const double* q, const double* keys, std::size_t n_keys, std::size_t dim, double scale, double* out) {
    for (std::size_t t = 0; t < n_keys; ++t) {
        out[t] = scale * dot(q, keys + t * dim, dim);
    }
}

void mix(const double* weights, const double* values, std::size_t n, std::size_t dim, double* out) {
    for (std::size_t t = 0; t < n; ++t) {
        axpy(weights[t], values + t * dim, out, dim);
    }
}

const KernelTable& table() {
    static const KernelTable t{Isa::scalar, "scalar", &dot, &axpy, &scores, &mix};
    return t;
}

}  // namespace cca::kernels::scalar
