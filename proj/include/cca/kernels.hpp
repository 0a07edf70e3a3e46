// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Inner-loop kernels for the attention paths.
//
// Every kernel has a scalar reference implementation and, on x86-64 builds
// with CCA_HAVE_AVX2, an AVX2/FMA variant. The variant is picked once at
// startup from CPUID; CCA_ISA=scalar in the environment or set_active_isa()
// forces the reference path. The two paths agree to rounding (see
// tests/kernels_test.cpp), they are not bit-identical.
//
// `scores` and `mix` are defined in terms of `dot` and `axpy` applied row by
// row in ascending order, so callers that walk rows one at a time (the ring
// buffer in the decode cache) reproduce the batched result bit for bit.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace cca::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
    Isa isa;
    std::string_view name;
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // out[t] = scale * dot(q, keys + t*dim)  for t in [0, n_keys)
    void (*scores)(const double* q, const double* keys, std::size_t n_keys, std::size_t dim, double scale,
                   double* out);
    // out += sum_t weights[t] * values[t*dim ...]
    void (*mix)(const double* weights, const double* values, std::size_t n, std::size_t dim, double* out);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scores(const double* q, const double* keys, std::size_t n_keys, std::size_t dim, double scale, double* out);
void mix(const double* weights, const double* values, std::size_t n, std::size_t dim, double* out);
const KernelTable& table();
}  // namespace scalar

#if defined(CCA_HAVE_AVX2)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scores(const double* q, const double* keys, std::size_t n_keys, std::size_t dim, double scale, double* out);
void mix(const double* weights, const double* values, std::size_t n, std::size_t dim, double* out);
const KernelTable& table();
}  // namespace avx2
#endif

/// Best ISA this binary can run on this CPU.
Isa detected_isa() noexcept;
Isa active_isa() noexcept;
/// Throws cca::Error if `isa` is not available.
void set_active_isa(Isa isa);
std::string_view isa_name(Isa isa) noexcept;

const KernelTable& active() noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

/// Scoped override of the active ISA, restoring the previous one on exit.
class IsaScope {
public:
    explicit IsaScope(Isa isa);
    ~IsaScope();
    IsaScope(const IsaScope&) = delete;
    IsaScope& operator=(const IsaScope&) = delete;

private:
    Isa previous_;
};

/**
 * Optional multiply-add accounting for the attention paths.
 *
 * While a FlopCounter is alive on a thread, the attention code reports every
 * score and value-mixing operation it performs (2 FLOPs per multiply-add).
 * Used to check the analytic FLOP ledger against an actual execution.
 */
class FlopCounter {
public:
    FlopCounter();
    ~FlopCounter();
    FlopCounter(const FlopCounter&) = delete;
    FlopCounter& operator=(const FlopCounter&) = delete;

    std::uint64_t flops() const noexcept { return flops_; }

    static void record(std::uint64_t flops) noexcept;

private:
    std::uint64_t flops_ = 0;
    FlopCounter* outer_ = nullptr;
};

}  // namespace cca::kernels
