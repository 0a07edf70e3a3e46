// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "cca/bench.hpp"
#include "cca/expansion.hpp"
#include "cca/numerics.hpp"
#include "oracles.hpp"
#include "param_names.hpp"

namespace cca {
namespace {

struct Case {
    HeadTrace trace;
    CoreTokenSet encoded;
    Matrix v;
    AttentionConfig config;
};

Case build(std::size_t length, std::size_t g, std::size_t s, PoolingMode mode, std::uint64_t seed, bool rope = false) {
    Case c;
    c.config.n_heads = 1;
    c.config.head_dim = 8;
    c.config.group_size = g;
    c.config.local_window = s;
    c.config.pooling = mode;
    c.config.rope_enabled = rope;
    const Matrix q = seeded_init(length, 8, seed * 3 + 1, 1.0);
    const Matrix k = seeded_init(length, 8, seed * 3 + 2, 1.0);
    c.v = seeded_init(length, 8, seed * 3 + 3, 1.0);
    c.trace = attention_head_forward(q, k, c.v, c.config, AttentionVariant::cca, false);
    c.encoded = c.trace.core;
    c.encoded.core_k = c.trace.core_k_encoded;
    return c;
}

ExpandedWeights expand(const Case& c) { return expand_weights(c.trace.q, c.trace.k, c.v, c.encoded, c.config); }

class ExpansionModes : public ::testing::TestWithParam<PoolingMode> {};

TEST_P(ExpansionModes, RowsSumToOneAndReconstructOutput) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Case c = build(24, 4, 4, GetParam(), seed, seed % 2 == 1);
        const ExpandedWeights a = expand(c);
        EXPECT_LE(max_row_sum_error(a), 1e-12);
        EXPECT_LE(max_abs_diff(reconstruct_output(a, c.v), c.trace.output), 1e-10);
        for (std::size_t i = 0; i < 24; ++i)
            for (std::size_t t = i + 1; t < 24; ++t) ASSERT_EQ(a.a(i, t), 0.0);
    }
}

TEST_P(ExpansionModes, MatchesBruteForceExpansion) {
    const Case c = build(30, 4, 3, GetParam(), 9, true);
    const oracle::CcaResult ref =
        oracle::cca_head(seeded_init(30, 8, 28, 1.0), seeded_init(30, 8, 29, 1.0), c.v, 4, 3, GetParam(), true);
    EXPECT_LE(max_abs_diff(expand(c).a, ref.expanded), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(All, ExpansionModes,
                         ::testing::Values(PoolingMode::weighted, PoolingMode::mean, PoolingMode::max),
                         ModeName());

TEST(Expansion, GroupSizeOneIsFullAttentionWeights) {
    const Case c = build(20, 1, 2, PoolingMode::weighted, 3);
    const ExpandedWeights a = expand(c);
    const double scale = 1.0 / std::sqrt(8.0);
    for (std::size_t i = 0; i < 20; ++i) {
        std::vector<double> z(i + 1);
        for (std::size_t t = 0; t <= i; ++t) z[t] = oracle::dot(c.trace.q, i, c.trace.k, t) * scale;
        const auto p = oracle::softmax(z);
        for (std::size_t t = 0; t <= i; ++t) EXPECT_NEAR(a.a(i, t), p[t], 1e-12);
    }
}

TEST(Expansion, WeightedAndMeanAreFullyReachable) {
    for (PoolingMode mode : {PoolingMode::weighted, PoolingMode::mean}) {
        const ReachabilityReport r = reachability_report(expand(build(24, 4, 4, mode, 11)));
        EXPECT_TRUE(r.ok);
        EXPECT_TRUE(r.violations.empty());
    }
}

TEST(Expansion, MaxPoolingGapsAreStructural) {
    const Case c = build(24, 4, 4, PoolingMode::max, 12);
    const ExpandedWeights a = expand(c);
    const ReachabilityReport r = reachability_report(a);
    EXPECT_FALSE(r.ok);
    EXPECT_FALSE(r.structural.empty());
    EXPECT_TRUE(r.underflow.empty());
    EXPECT_EQ(r.structural.size(), r.violations.size());
    for (auto [i, t] : r.violations) EXPECT_EQ(a.source(i - 1, t - 1), WeightSource::none);
}

TEST(Expansion, UnderflowIsReportedSeparately) {
    // Hand-built 2x2: the (2,1) entry is positive in exact arithmetic but underflows.
    ExpandedWeights a{Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}}),
                      {WeightSource::local, WeightSource::none, WeightSource::local, WeightSource::local}};
    const ReachabilityReport r = reachability_report(a);
    EXPECT_FALSE(r.ok);
    ASSERT_EQ(r.underflow.size(), 1u);
    EXPECT_EQ(r.underflow[0], (std::pair<std::size_t, std::size_t>{2, 1}));
    EXPECT_TRUE(r.structural.empty());
}

TEST(Expansion, ShortSequenceReconstructsFullAttention) {
    const Case c = build(6, 4, 8, PoolingMode::weighted, 13);
    EXPECT_LE(max_abs_diff(reconstruct_output(expand(c), c.v), oracle::causal_attention(c.trace.q, c.trace.k, c.v)),
              1e-10);
}

TEST(Expansion, SingleTokenIsVacuouslyReachable) {
    const Case c = build(1, 4, 2, PoolingMode::weighted, 14);
    const ExpandedWeights a = expand(c);
    EXPECT_EQ(reconstruct_output(a, c.v), c.v);
    EXPECT_TRUE(reachability_report(a).ok);
}

TEST(Expansion, SinkWindowLeavesMiddleUnreachable) {
    const Matrix q = seeded_init(8, 8, 1, 1.0), k = seeded_init(8, 8, 2, 1.0);
    const ReachabilityReport r = reachability_report(sink_window_weights(q, k, 0, 2));
    EXPECT_FALSE(r.ok);
    // Query 8 with window 2 sees only tokens 7 and 8.
    EXPECT_NE(std::find(r.violations.begin(), r.violations.end(), std::pair<std::size_t, std::size_t>{8, 3}),
              r.violations.end());
}

TEST(Expansion, RefusesOversizedSequences) {
    const Matrix q(kMaxExpansionLength + 1, 2, 0.0);
    CoreTokenSet core;
    core.group_size = 4;
    AttentionConfig c;
    c.n_heads = 1;
    c.head_dim = 2;
    EXPECT_THROW(expand_weights(q, q, q, core, c), Error);
}

}  // namespace
}  // namespace cca
