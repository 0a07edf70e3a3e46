// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cca/model.hpp"

namespace cca {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct VerifyOptions {
    AttentionConfig attention;  // g, s, pooling default and RoPE settings for the checks that use them
    std::uint64_t seed = 0;
    std::size_t seeds = 5;  // random instances per check
};

/// Runs the invariant suite. Every pooling mode is exercised regardless of attention.pooling.
std::vector<CheckResult> run_verify(const VerifyOptions& options);

/// Relative gradient error with a 1e-4 denominator floor.
double gradient_rel_error(double analytic, double numeric) noexcept;

void print_checks(std::ostream& out, const std::vector<CheckResult>& checks);

}  // namespace cca
