// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Token-level view of the fused attention: each core-token weight is spread
// back over the raw tokens of its group through phi, giving an L x L causal
// weight matrix whose product with V reproduces the fused output.

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "cca/attention.hpp"
#include "cca/matrix.hpp"

namespace cca {

enum class WeightSource : std::uint8_t {
    none,    // structurally zero (masked, or an unselected max-pooling slot)
    global,  // reached through a core token via phi
    local,   // raw token inside the local window
};

struct ExpandedWeights {
    Matrix a;                              // L x L
    std::vector<WeightSource> provenance;  // row-major, L x L

    std::size_t length() const noexcept { return a.rows(); }
    WeightSource source(std::size_t row, std::size_t col) const { return provenance[row * a.cols() + col]; }
};

/// Largest L accepted by expand_weights; the expansion is O(L^2) memory.
inline constexpr std::size_t kMaxExpansionLength = 4096;

/// Entries at or below this are treated as zero by the reachability scan.
inline constexpr double kPositivityFloor = 1e-300;

/**
 * Builds the expanded weights from the same inputs fused_cca_attention takes
 * (position-encoded q and k, core keys already encoded). The logits are
 * recomputed here with plain loops rather than through the kernels.
 */
ExpandedWeights expand_weights(const Matrix& q, const Matrix& k, const Matrix& v, const CoreTokenSet& core,
                               const AttentionConfig& config);

/// A * V.
Matrix reconstruct_output(const ExpandedWeights& weights, const Matrix& v);

struct ReachabilityReport {
    bool ok = true;
    // 1-indexed (query, key) pairs with t <= i whose weight is not positive.
    std::vector<std::pair<std::size_t, std::size_t>> violations;
    // Subsets of `violations`: masked by construction vs. underflowed to zero.
    std::vector<std::pair<std::size_t, std::size_t>> structural;
    std::vector<std::pair<std::size_t, std::size_t>> underflow;
};

ReachabilityReport reachability_report(const ExpandedWeights& weights);

/// Largest |row sum - 1| over all rows.
double max_row_sum_error(const ExpandedWeights& weights);

}  // namespace cca
