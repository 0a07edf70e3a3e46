// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "cca/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "cca/matrix.hpp"

namespace cca::kernels {

namespace {

bool cpu_has_avx2() noexcept {
#if defined(CCA_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable& table_for(Isa isa) noexcept {
#if defined(CCA_HAVE_AVX2)
    if (isa == Isa::avx2) {
        return avx2::table();
    }
#endif
    (void)isa;
    return scalar::table();
}

Isa initial_isa() noexcept {
    const char* forced = std::getenv("CCA_ISA");
    if (forced != nullptr && std::string(forced) == "scalar") {
        return Isa::scalar;
    }
    return detected_isa();
}

std::atomic<const KernelTable*>& active_slot() noexcept {
    static std::atomic<const KernelTable*> slot{&table_for(initial_isa())};
    return slot;
}

thread_local FlopCounter* current_counter = nullptr;

}  // namespace

Isa detected_isa() noexcept { return cpu_has_avx2() ? Isa::avx2 : Isa::scalar; }

Isa active_isa() noexcept { return active().isa; }

void set_active_isa(Isa isa) {
    if (isa == Isa::avx2 && detected_isa() != Isa::avx2) {
        throw Error("AVX2 kernels are not available on this build or CPU");
    }
    active_slot().store(&table_for(isa), std::memory_order_release);
}

std::string_view isa_name(Isa isa) noexcept { return isa == Isa::avx2 ? "avx2" : "scalar"; }

const KernelTable& active() noexcept { return *active_slot().load(std::memory_order_acquire); }

IsaScope::IsaScope(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }

IsaScope::~IsaScope() { set_active_isa(previous_); }

FlopCounter::FlopCounter() : outer_(current_counter) { current_counter = this; }

FlopCounter::~FlopCounter() { current_counter = outer_; }

void FlopCounter::record(std::uint64_t flops) noexcept {
    for (FlopCounter* c = current_counter; c != nullptr; c = c->outer_) {
        c->flops_ += flops;
    }
}

}  // namespace cca::kernels
