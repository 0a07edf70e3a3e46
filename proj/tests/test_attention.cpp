// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "cca/attention.hpp"
#include "cca/numerics.hpp"
#include "oracles.hpp"
#include "param_names.hpp"

namespace cca {
namespace {

struct Qkv {
    Matrix q, k, v;
};

Qkv random_qkv(std::size_t length, std::size_t dim, std::uint64_t seed) {
    return {seeded_init(length, dim, seed * 3 + 1, 1.0), seeded_init(length, dim, seed * 3 + 2, 1.0),
            seeded_init(length, dim, seed * 3 + 3, 1.0)};
}

AttentionConfig single_head(std::size_t dim, std::size_t g, std::size_t s, PoolingMode mode = PoolingMode::weighted,
                            bool rope = false) {
    AttentionConfig c;
    c.n_heads = 1;
    c.head_dim = dim;
    c.group_size = g;
    c.local_window = s;
    c.pooling = mode;
    c.rope_enabled = rope;
    return c;
}

TEST(PartitionGroups, TenTokensGroupsOfFour) {
    const GroupPartition p = partition_groups(10, 4);
    EXPECT_EQ(p.group_count, 2u);
    ASSERT_EQ(p.groups.size(), 2u);
    EXPECT_EQ(p.groups[0].first, 1u);
    EXPECT_EQ(p.groups[0].last, 4u);
    EXPECT_EQ(p.groups[1].first, 5u);
    EXPECT_EQ(p.groups[1].last, 8u);
    EXPECT_EQ(p.trailing_first, 9u);
    EXPECT_EQ(p.trailing_count, 2u);
}

TEST(PartitionGroups, ExactAndShort) {
    const GroupPartition exact = partition_groups(4, 4);
    EXPECT_EQ(exact.group_count, 1u);
    EXPECT_EQ(exact.trailing_count, 0u);
    const GroupPartition shorter = partition_groups(3, 4);
    EXPECT_EQ(shorter.group_count, 0u);
    EXPECT_EQ(shorter.trailing_first, 1u);
    EXPECT_EQ(shorter.trailing_count, 3u);
}

TEST(IndexPlan, FrozenExamples) {
    EXPECT_EQ(index_plan(11, 4, 2), (IndexPlan{2, 9, 3}));
    EXPECT_EQ(index_plan(5, 4, 2), (IndexPlan{0, 1, 5}));
    EXPECT_EQ(index_plan(500, 16, 1024), (IndexPlan{0, 1, 500}));
    EXPECT_THROW(index_plan(0, 4, 2), Error);
}

TEST(IndexPlan, MatchesOracleAndIsMonotone) {
    for (std::size_t g : {1, 2, 3, 4, 16}) {
        for (std::size_t s : {1, 2, 5, 8, 64}) {
            IndexPlan prev = index_plan(1, g, s);
            for (std::size_t i = 1; i <= 300; ++i) {
                const IndexPlan p = index_plan(i, g, s);
                const oracle::Plan o = oracle::plan(static_cast<long>(i), static_cast<long>(g), static_cast<long>(s));
                ASSERT_EQ(p.global_end, static_cast<std::size_t>(o.j));
                ASSERT_EQ(p.local_start, static_cast<std::size_t>(o.start));
                ASSERT_EQ(p.window_len, static_cast<std::size_t>(o.w));
                ASSERT_GE(p.global_end, prev.global_end);
                ASSERT_GE(p.local_start, prev.local_start);
                if (i > s) {
                    ASSERT_GE(p.window_len, s);
                    ASSERT_LE(p.window_len, s + g - 1);
                    ASSERT_EQ(p.window_len, s + (i - s) % g);
                } else {
                    ASSERT_EQ(p.global_end, 0u);
                }
                if (i < g + s) ASSERT_FALSE(p.has_global());
                prev = p;
            }
        }
    }
}

TEST(GroupMiddle, CeilOfHalf) {
    EXPECT_EQ(group_middle_token(1, 16), 8u);
    EXPECT_EQ(group_middle_token(2, 16), 24u);
    EXPECT_EQ(group_middle_token(1, 5), 3u);
    EXPECT_EQ(group_middle_token(3, 1), 3u);
}

TEST(PoolCoreTokens, GroupSizeOneCopiesKeys) {
    const Qkv x = random_qkv(9, 4, 1);
    const CoreTokenSet core = pool_core_tokens(x.q, x.k, x.k, x.v, 1, PoolingMode::weighted);
    EXPECT_EQ(core.group_count(), 9u);
    EXPECT_EQ(core.core_k, x.k);
    for (std::size_t p = 0; p < 9; ++p) EXPECT_EQ(core.phi(p, 0), 1.0);
}

TEST(PoolCoreTokens, IdenticalTokensGiveThatToken) {
    Matrix k(4, 4), v(4, 4);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            k(r, c) = 0.1 * (c + 1);
            v(r, c) = -0.3 * c;
        }
    const Matrix q = seeded_init(4, 4, 9, 1.0);
    for (PoolingMode mode : {PoolingMode::weighted, PoolingMode::mean, PoolingMode::max}) {
        const CoreTokenSet core = pool_core_tokens(q, k, k, v, 4, mode);
        EXPECT_LE(max_abs_diff(core.core_k, k.row_block(0, 1)), 1e-15);
        EXPECT_LE(max_abs_diff(core.core_v, v.row_block(0, 1)), 1e-15);
    }
}

TEST(PoolCoreTokens, MatchesBruteForceInEveryMode) {
    for (PoolingMode mode : {PoolingMode::weighted, PoolingMode::mean, PoolingMode::max}) {
        const Qkv x = random_qkv(22, 8, 4);
        const CoreTokenSet core = pool_core_tokens(x.q, x.k, x.k, x.v, 5, mode);
        const oracle::CcaResult ref = oracle::cca_head(x.q, x.k, x.v, 5, 3, mode, false);
        EXPECT_EQ(core.group_count(), 4u);
        EXPECT_LE(max_abs_diff(core.phi, ref.phi), 1e-12);
        EXPECT_LE(max_abs_diff(core.core_k, ref.core_k), 1e-12);
        EXPECT_LE(max_abs_diff(core.core_v, ref.core_v), 1e-12);
        for (std::size_t p = 0; p < core.group_count(); ++p) {
            double sum = 0.0;
            std::size_t nonzero = 0;
            for (double w : core.phi.row(p)) {
                sum += w;
                nonzero += w != 0.0;
                if (mode == PoolingMode::weighted) EXPECT_GT(w, 0.0);
                if (mode == PoolingMode::mean) EXPECT_DOUBLE_EQ(w, 0.2);
            }
            EXPECT_NEAR(sum, 1.0, 1e-12);
            if (mode == PoolingMode::max) EXPECT_EQ(nonzero, 1u);
        }
    }
}

TEST(PoolCoreTokens, RejectsMismatchedRows) {
    const Qkv x = random_qkv(8, 4, 2);
    EXPECT_THROW(pool_core_tokens(x.q, x.k, x.k.row_block(0, 7), x.v, 4, PoolingMode::mean), Error);
}

TEST(FusedAttention, GroupSizeOneEqualsFullAttention) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        for (std::size_t length : {1, 3, 17, 32}) {
            const Qkv x = random_qkv(length, 8, seed);
            const AttentionConfig c = single_head(8, 1, 1 + seed % 4);
            const Matrix out = attention_head_forward(x.q, x.k, x.v, c, AttentionVariant::cca, false).output;
            EXPECT_LE(max_abs_diff(out, oracle::causal_attention(x.q, x.k, x.v)), 1e-10);
        }
    }
}

TEST(FusedAttention, ShortContextEqualsFullAttention) {
    const Qkv x = random_qkv(40, 8, 3);
    for (std::size_t g : {2, 4, 16}) {
        const Matrix out =
            attention_head_forward(x.q, x.k, x.v, single_head(8, g, 40), AttentionVariant::cca, false).output;
        EXPECT_LE(max_abs_diff(out, full_causal_attention(x.q, x.k, x.v)), 1e-10);
    }
}

TEST(FusedAttention, SingleTokenReturnsItsValue) {
    const Qkv x = random_qkv(1, 8, 5);
    const Matrix out =
        attention_head_forward(x.q, x.k, x.v, single_head(8, 4, 2), AttentionVariant::cca, false).output;
    EXPECT_EQ(out, x.v);
}

class FusedVsOracle : public ::testing::TestWithParam<std::tuple<PoolingMode, bool>> {};

TEST_P(FusedVsOracle, MatchesBruteForcePipeline) {
    const auto [mode, rope] = GetParam();
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const Qkv x = random_qkv(37, 8, 10 + seed);
        for (auto [g, s] : {std::pair<std::size_t, std::size_t>{4, 2}, {3, 5}, {4, 8}, {2, 1}}) {
            const AttentionConfig c = single_head(8, g, s, mode, rope);
            const HeadTrace tr = attention_head_forward(x.q, x.k, x.v, c, AttentionVariant::cca, true);
            const oracle::CcaResult ref = oracle::cca_head(x.q, x.k, x.v, g, s, mode, rope);
            EXPECT_LE(max_abs_diff(tr.output, ref.out), 1e-12);
            for (const auto& w : tr.weights) {
                double sum = 0.0;
                for (double p : w) {
                    sum += p;
                    EXPECT_GT(p, 0.0);
                }
                EXPECT_NEAR(sum, 1.0, 1e-12);
            }
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Modes, FusedVsOracle,
                         ::testing::Combine(::testing::Values(PoolingMode::weighted, PoolingMode::mean,
                                                              PoolingMode::max),
                                            ::testing::Bool()),
                         ModeRopeName());

TEST(FusedAttention, CausalPrefixIsBitStable) {
    Qkv x = random_qkv(30, 8, 6);
    const AttentionConfig c = single_head(8, 4, 3, PoolingMode::weighted, true);
    const Matrix before = attention_head_forward(x.q, x.k, x.v, c, AttentionVariant::cca, false).output;
    for (std::size_t t = 19; t < 30; ++t) {
        x.k(t, 2) += 3.0;
        x.v(t, 5) -= 1.0;
        x.q(t, 0) *= -1.0;
    }
    const Matrix after = attention_head_forward(x.q, x.k, x.v, c, AttentionVariant::cca, false).output;
    EXPECT_EQ(before.row_block(0, 19), after.row_block(0, 19));
}

TEST(FusedAttention, RejectsCoreGroupSizeMismatch) {
    const Qkv x = random_qkv(12, 4, 7);
    const CoreTokenSet core = pool_core_tokens(x.q, x.k, x.k, x.v, 3, PoolingMode::weighted);
    try {
        fused_cca_attention(x.q, x.k, x.v, core, single_head(4, 4, 2));
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("core group size mismatch"), std::string::npos);
    }
}

TEST(FullAttention, UniformKeysAverageValues) {
    const Matrix q = seeded_init(6, 4, 1, 1.0);
    const Matrix k(6, 4, 0.5);
    const Matrix v = seeded_init(6, 4, 2, 1.0);
    const Matrix out = full_causal_attention(q, k, v);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t c = 0; c < 4; ++c) {
            double mean = 0.0;
            for (std::size_t t = 0; t <= i; ++t) mean += v(t, c);
            EXPECT_NEAR(out(i, c), mean / static_cast<double>(i + 1), 1e-15);
        }
    }
}

TEST(FullAttention, MatchesNaiveLoop) {
    const Qkv x = random_qkv(8, 8, 8);
    EXPECT_LE(max_abs_diff(full_causal_attention(x.q, x.k, x.v), oracle::causal_attention(x.q, x.k, x.v)), 1e-12);
}

TEST(MultiHead, OneHeadGroupOneIsProjectedFullAttention) {
    AttentionConfig c = single_head(8, 1, 3);
    const std::size_t d = 8;
    const ProjectionWeights w = ProjectionWeights::random(d, c, 21, 0.4);
    const Matrix x = seeded_init(20, d, 22, 1.0);
    const Matrix out = multi_head_cca(x, w, c);
    const Matrix ref = matmul(oracle::causal_attention(matmul(x, w.wq), matmul(x, w.wk), matmul(x, w.wv)), w.wo);
    EXPECT_LE(max_abs_diff(out, ref), 1e-10);
    EXPECT_EQ(out, multi_head_cca(x, w, c));
}

TEST(MultiHead, GroupSizeIrrelevantWhenWindowCoversSequence) {
    AttentionConfig c;
    c.n_heads = 2;
    c.head_dim = 4;
    c.local_window = 32;
    const ProjectionWeights w = ProjectionWeights::random(8, c, 5, 0.4);
    const Matrix x = seeded_init(32, 8, 6, 1.0);
    c.group_size = 1;
    const Matrix ref = multi_head_cca(x, w, c);
    for (std::size_t g : {2, 4, 8, 16}) {
        c.group_size = g;
        EXPECT_EQ(multi_head_cca(x, w, c), ref) << "g=" << g;
    }
}

TEST(MultiHead, RejectsWrongWidths) {
    AttentionConfig c;
    c.n_heads = 2;
    c.head_dim = 4;
    const ProjectionWeights w = ProjectionWeights::random(8, c, 5, 0.4);
    EXPECT_THROW(multi_head_cca(seeded_init(4, 6, 1, 1.0), w, c), Error);
}

TEST(AttentionConfig, Validation) {
    AttentionConfig c;
    c.group_size = 0;
    EXPECT_THROW(c.validate(), Error);
    c.group_size = 4;
    c.local_window = 0;
    EXPECT_THROW(c.validate(), Error);
    c.local_window = 4;
    c.head_dim = 5;
    c.rope_enabled = true;
    EXPECT_THROW(c.validate(), Error);
    c.rope_enabled = false;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(parse_pooling_mode("max"), PoolingMode::max);
    EXPECT_THROW(parse_pooling_mode("median"), Error);
}

}  // namespace
}  // namespace cca
