// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// FLOP and KV-memory ledgers for full, CCA and sink-window attention, a
// wall-clock harness, and the CSV writer.
//
// FLOPs count 2 per multiply-add and cover attention scores, value mixing and
// core-token pooling. Q/K/V/O projections are identical across variants and
// are left out.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "cca/attention.hpp"
#include "cca/expansion.hpp"
#include "cca/matrix.hpp"

namespace cca {

enum class BenchVariant { full, cca, sink_window };
enum class BenchMode { prefill, decode_per_token };
// fixed_g: g stays constant as L grows. fixed_m: g = max(1, L / m), so the
// number of core tokens stays at m.
enum class GroupPolicy { fixed_g, fixed_m };

std::string_view to_string(BenchVariant v) noexcept;
std::string_view to_string(BenchMode m) noexcept;
std::string_view to_string(GroupPolicy p) noexcept;
BenchVariant parse_bench_variant(std::string_view text);
BenchMode parse_bench_mode(std::string_view text);
GroupPolicy parse_group_policy(std::string_view text);

struct BenchConfig {
    AttentionConfig attention;  // g, s, heads, d_h, pooling
    GroupPolicy policy = GroupPolicy::fixed_g;
    std::size_t group_count = 16;  // m, used by fixed_m
    std::size_t n_sink = 4;
    std::size_t sink_window = 64;
    std::vector<std::size_t> lengths{1024, 2048, 4096, 8192, 16384};
    std::vector<BenchVariant> variants{BenchVariant::full, BenchVariant::cca};
    std::vector<BenchMode> modes{BenchMode::prefill, BenchMode::decode_per_token};
    std::size_t repeats = 5;  // timed runs after one warm-up, at least 5
    std::uint64_t seed = 0;

    void validate() const;
    /// Group size used at length L under the configured policy.
    std::size_t group_size_at(std::size_t length) const;
    /// Attention config with the group size for length L filled in.
    AttentionConfig attention_at(std::size_t length) const;
};

struct BenchRecord {
    BenchVariant variant = BenchVariant::cca;
    BenchMode mode = BenchMode::prefill;
    std::size_t length = 0;
    std::size_t g = 0;  // sink_window rows: number of sink tokens
    std::size_t s = 0;  // sink_window rows: window length
    std::size_t heads = 0;
    std::size_t head_dim = 0;
    std::uint64_t flops_attention = 0;
    std::uint64_t kv_bytes = 0;
    double wall_ms = 0.0;
};

inline constexpr std::string_view kBenchCsvHeader =
    "variant,mode,L,g,s,heads,head_dim,flops_attention,kv_bytes,wall_ms";

/// Prefill: whole-sequence cost. Decode: cost of producing token L given L - 1 cached tokens.
std::uint64_t flops_attention(BenchVariant variant, std::size_t length, const BenchConfig& config, BenchMode mode);

/// Cached K and V bytes (f64) after L tokens.
std::uint64_t kv_bytes(BenchVariant variant, std::size_t length, const BenchConfig& config);

/// Keys attended by query i under the sink-window pattern.
std::size_t sink_window_keys(std::size_t position, std::size_t n_sink, std::size_t window) noexcept;

/// Each query attends the first n_sink tokens of its prefix plus its last `window` tokens.
Matrix sink_window_attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t n_sink,
                             std::size_t window);

/// L x L weight matrix of the sink-window pattern, for the reachability scan.
ExpandedWeights sink_window_weights(const Matrix& q, const Matrix& k, std::size_t n_sink, std::size_t window);

/// Ledger values plus a measured wall-clock median for one sweep point.
BenchRecord measure(BenchVariant variant, BenchMode mode, std::size_t length, const BenchConfig& config);

/// Ledger values only (wall_ms = 0).
BenchRecord ledger_record(BenchVariant variant, BenchMode mode, std::size_t length, const BenchConfig& config);

void write_csv(std::ostream& out, const std::vector<BenchRecord>& records, const BenchConfig& config);

/// Sweeps lengths x variants x modes, writes the CSV to `output` and returns the rows.
std::vector<BenchRecord> run_suite(const BenchConfig& config, const std::filesystem::path& output);

}  // namespace cca
