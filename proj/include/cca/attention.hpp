// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Core-context-aware attention, single head and multi head.
//
// Positions in this interface are 1-indexed (token 1 is the first token).
// Matrices are 0-indexed, so token i lives in row i - 1.
//
// Per query i the key set is
//   global: core tokens 1..j          with j = max(0, floor((i - s) / g))
//   local : raw tokens  j*g+1 .. i    (window length w = i - j*g)
// The local window starts right after the last pooled group that the query
// sees, so global and local keys cover tokens 1..i exactly once.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cca/matrix.hpp"
#include "cca/numerics.hpp"

namespace cca {

enum class PoolingMode { weighted, mean, max };

std::string_view to_string(PoolingMode mode) noexcept;
PoolingMode parse_pooling_mode(std::string_view text);

enum class AttentionVariant { cca, full };

std::string_view to_string(AttentionVariant variant) noexcept;
AttentionVariant parse_attention_variant(std::string_view text);

struct AttentionConfig {
    std::size_t group_size = 4;      // g
    std::size_t local_window = 64;   // s
    std::size_t n_heads = 4;
    std::size_t head_dim = 16;       // d_h
    bool rope_enabled = false;
    double rope_base = 10000.0;
    PoolingMode pooling = PoolingMode::weighted;

    void validate() const;
    double score_scale() const;
    RopeParams rope() const;
    std::size_t inner_dim() const noexcept { return n_heads * head_dim; }
};

struct GroupRange {
    std::size_t first;  // 1-indexed, inclusive
    std::size_t last;
};

struct GroupPartition {
    std::size_t group_count = 0;       // m = floor(L / g)
    std::vector<GroupRange> groups;
    std::size_t trailing_first = 0;    // first token of the partial tail, 0 if none
    std::size_t trailing_count = 0;
};

GroupPartition partition_groups(std::size_t length, std::size_t group_size);

struct IndexPlan {
    std::size_t global_end = 0;   // j: core tokens 1..j are visible
    std::size_t local_start = 1;  // first raw token of the local window
    std::size_t window_len = 0;   // w = i - j*g

    bool has_global() const noexcept { return global_end > 0; }
    bool operator==(const IndexPlan&) const = default;
};

IndexPlan index_plan(std::size_t position, std::size_t group_size, std::size_t local_window);

/// 1-indexed token whose position encoding a core key takes: the ceil(g/2)-th token of its group.
std::size_t group_middle_token(std::size_t group, std::size_t group_size) noexcept;

/// Pooled core tokens of one head.
struct CoreTokenSet {
    std::size_t group_size = 0;
    Matrix phi;     // m x g, each row on the simplex
    Matrix core_k;  // m x d_h
    Matrix core_v;  // m x d_h

    std::size_t group_count() const noexcept { return phi.rows(); }
};

/**
 * Pools every complete group of g tokens into one core key/value pair.
 *
 * `score_q` / `score_k` produce the pooling weights (weighted: softmax of the
 * group's last query against the group's keys; max: one-hot at the arg max of
 * the same scores; mean: uniform). `raw_k` / `raw_v` are the rows that get
 * pooled, so core_k == phi * raw_k group by group.
 */
CoreTokenSet pool_core_tokens(const Matrix& score_q, const Matrix& score_k, const Matrix& raw_k,
                              const Matrix& raw_v, std::size_t group_size, PoolingMode mode);

/// Rotates each token row at its own 0-based position (token i at angle position i - 1).
Matrix encode_positions(const Matrix& x, const RopeParams& rope);

/// Rotates core key p at the position of group_middle_token(p, g).
Matrix encode_core_keys(const Matrix& core_k, std::size_t group_size, const RopeParams& rope);

/**
 * Fused global + local attention for one head.
 *
 * q and k must already carry their position encoding, and `core.core_k` is
 * used as given, so pass core keys through encode_core_keys first when RoPE
 * is on.
 */
Matrix fused_cca_attention(const Matrix& q, const Matrix& k, const Matrix& v, const CoreTokenSet& core,
                           const AttentionConfig& config);

/// softmax(q_i k_{1..i}^T / sqrt(d_h)) v_{1..i} for every row.
Matrix full_causal_attention(const Matrix& q, const Matrix& k, const Matrix& v);

/// Everything the forward pass of one head produced; kept for backprop and analysis.
struct HeadTrace {
    AttentionVariant variant = AttentionVariant::cca;
    Matrix q;               // position-encoded queries
    Matrix k;               // position-encoded keys
    CoreTokenSet core;      // core_k before position encoding
    Matrix core_k_encoded;  // what the queries attend to
    Matrix output;
    std::vector<IndexPlan> plans;
    // Per query: softmax weights over [core 1..j ; local window], concatenated.
    std::vector<std::vector<double>> weights;
};

/// One head from raw (pre-RoPE) projections. Full variant ignores g and s.
HeadTrace attention_head_forward(const Matrix& q_raw, const Matrix& k_raw, const Matrix& v,
                                 const AttentionConfig& config, AttentionVariant variant, bool keep_weights);

struct ProjectionWeights {
    Matrix wq;  // d x (heads * d_h)
    Matrix wk;
    Matrix wv;
    Matrix wo;  // (heads * d_h) x d

    static ProjectionWeights random(std::size_t d_model, const AttentionConfig& config, std::uint64_t seed,
                                    double scale);
    void validate(std::size_t d_model, const AttentionConfig& config) const;
};

/// Projects, runs every head, concatenates and applies Wo.
Matrix multi_head_attention(const Matrix& x, const ProjectionWeights& weights, const AttentionConfig& config,
                            AttentionVariant variant);

inline Matrix multi_head_cca(const Matrix& x, const ProjectionWeights& weights, const AttentionConfig& config) {
    return multi_head_attention(x, weights, config, AttentionVariant::cca);
}

namespace detail {

/// Contiguous run of key/value rows.
struct KeyValueRun {
    const double* keys;
    const double* values;
    std::size_t count;
};

/**
 * softmax(scale * q . keys) applied to values over the concatenation of
 * `runs`, written to `out` (length dim). `weights` receives the
 * distribution. Shared by the batch and the decode paths so that both
 * produce identical rows.
 */
void attend(std::span<const double> q, std::span<const KeyValueRun> runs, std::size_t dim, double scale,
            std::span<double> out, std::vector<double>& weights);

/// Pools one group of `phi.size()` contiguous rows. core_k and core_v are overwritten.
void pool_group(std::span<const double> last_query, const double* score_keys, const double* raw_keys,
                const double* raw_values, std::size_t dim, PoolingMode mode, std::span<double> phi,
                std::span<double> core_k, std::span<double> core_v);

}  // namespace detail

}  // namespace cca
