// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cca/attention.hpp"
#include "cca/matrix.hpp"

namespace cca {

struct CacheStats {
    std::size_t tokens = 0;
    std::size_t core_entries = 0;     // floor(t / g)
    std::size_t raw_entries = 0;      // min(t, s + g)
    std::size_t pending_entries = 0;  // t mod g
    std::uint64_t kv_bytes = 0;       // 8 * d_h * heads * 2 * (core + raw)
};

/**
 * Streaming decode state for one attention layer.
 *
 * Holds one position-encoded core key/value pair per completed group and a
 * ring of the most recent s + g raw tokens. The tokens of the group still
 * being filled are the newest ring entries, so they are not stored twice.
 * Every append produces exactly the row the batch path would produce for the
 * same position.
 *
 * Rows passed in are the concatenated per-head projections (heads * d_h
 * values) before position encoding.
 *
 * Single writer; copying a cache snapshots it.
 */
class DecodeCache {
public:
    explicit DecodeCache(const AttentionConfig& config);

    const AttentionConfig& config() const noexcept { return config_; }
    std::size_t tokens() const noexcept { return tokens_; }

    /// Consumes one token and returns its attention output (heads * d_h).
    std::vector<double> append(std::span<const double> q, std::span<const double> k, std::span<const double> v);

    /// Batch path for an empty cache: L x (heads * d_h) in, L x (heads * d_h) out.
    Matrix prefill(const Matrix& q, const Matrix& k, const Matrix& v);

    CacheStats stats() const noexcept;

    /// Changes g and s. Only allowed before the first token, or as a no-op.
    void reconfigure(std::size_t group_size, std::size_t local_window);

    // Inspection, mostly for tests. Ring accessors return tokens oldest first.
    Matrix core_keys(std::size_t head) const;
    Matrix core_values(std::size_t head) const;
    std::vector<std::size_t> ring_positions() const;
    Matrix ring_keys(std::size_t head) const;
    Matrix ring_values(std::size_t head) const;

private:
    struct HeadState {
        std::vector<double> core_k;  // encoded, row-major m x d_h
        std::vector<double> core_v;
        std::vector<double> ring_k;      // encoded keys, capacity x d_h
        std::vector<double> ring_k_raw;  // keys before position encoding, for pooling
        std::vector<double> ring_v;
    };

    std::size_t capacity() const noexcept { return config_.local_window + config_.group_size; }
    std::size_t slot(std::size_t position) const noexcept { return (position - 1) % capacity(); }
    void reset_storage();
    void check_row(std::span<const double> row, const char* name) const;
    void pool_latest_group(std::size_t head, std::span<const double> query);
    Matrix gather_ring(std::size_t head, const std::vector<double> HeadState::*field) const;

    AttentionConfig config_;
    std::size_t tokens_ = 0;
    std::vector<HeadState> heads_;
    std::vector<double> scratch_;
};

}  // namespace cca
