// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "cca/attention.hpp"
#include "cca/kernels.hpp"
#include "cca/numerics.hpp"

namespace cca {
namespace {

using kernels::KernelTable;

std::vector<const KernelTable*> tables() {
    std::vector<const KernelTable*> out{&kernels::scalar::table()};
#if defined(CCA_HAVE_AVX2)
    if (kernels::detected_isa() == kernels::Isa::avx2) out.push_back(&kernels::avx2::table());
#endif
    return out;
}

class KernelEquivalence : public ::testing::TestWithParam<std::size_t> {};

TEST_P(KernelEquivalence, AllVariantsMatchScalar) {
    const std::size_t dim = GetParam();
    const KernelTable& ref = kernels::scalar::table();
    const Matrix a = seeded_init(13, dim, dim * 3 + 1, 1.0);
    const Matrix b = seeded_init(13, dim, dim * 3 + 2, 1.0);
    for (const KernelTable* t : tables()) {
        SCOPED_TRACE(std::string(t->name));
        EXPECT_NEAR(t->dot(a.data(), b.data(), dim), ref.dot(a.data(), b.data(), dim), 1e-12);

        std::vector<double> y1(b.data(), b.data() + dim), y2 = y1;
        ref.axpy(0.37, a.data(), y1.data(), dim);
        t->axpy(0.37, a.data(), y2.data(), dim);
        for (std::size_t i = 0; i < dim; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-14);

        std::vector<double> s1(13), s2(13);
        ref.scores(a.data(), b.data(), 13, dim, 0.25, s1.data());
        t->scores(a.data(), b.data(), 13, dim, 0.25, s2.data());
        for (std::size_t i = 0; i < 13; ++i) EXPECT_NEAR(s1[i], s2[i], 1e-12);

        std::vector<double> m1(dim, 0.5), m2(dim, 0.5);
        ref.mix(s1.data(), b.data(), 13, dim, m1.data());
        t->mix(s1.data(), b.data(), 13, dim, m2.data());
        for (std::size_t i = 0; i < dim; ++i) EXPECT_NEAR(m1[i], m2[i], 1e-12);
    }
}

INSTANTIATE_TEST_SUITE_P(Widths, KernelEquivalence, ::testing::Values(1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 33, 64));

TEST(KernelDispatch, ScalarScopeRestoresPrevious) {
    const kernels::Isa before = kernels::active_isa();
    {
        kernels::IsaScope scope(kernels::Isa::scalar);
        EXPECT_EQ(kernels::active_isa(), kernels::Isa::scalar);
        EXPECT_EQ(kernels::active().isa, kernels::Isa::scalar);
    }
    EXPECT_EQ(kernels::active_isa(), before);
}

TEST(KernelDispatch, AttentionAgreesAcrossIsas) {
    AttentionConfig c;
    c.n_heads = 1;
    c.head_dim = 16;
    c.group_size = 4;
    c.local_window = 8;
    c.rope_enabled = true;
    const Matrix q = seeded_init(50, 16, 1, 1.0), k = seeded_init(50, 16, 2, 1.0), v = seeded_init(50, 16, 3, 1.0);
    Matrix scalar_out;
    {
        kernels::IsaScope scope(kernels::Isa::scalar);
        scalar_out = attention_head_forward(q, k, v, c, AttentionVariant::cca, false).output;
    }
    const Matrix native = attention_head_forward(q, k, v, c, AttentionVariant::cca, false).output;
    EXPECT_LE(max_abs_diff(scalar_out, native), 1e-12);
}

TEST(FlopCounter, NestedScopesEachSeeTheirOwnWork) {
    kernels::FlopCounter outer;
    kernels::FlopCounter::record(10);
    std::uint64_t inner_count = 0;
    {
        kernels::FlopCounter inner;
        kernels::FlopCounter::record(5);
        inner_count = inner.flops();
    }
    EXPECT_EQ(inner_count, 5u);
    EXPECT_EQ(outer.flops(), 15u);
}

}  // namespace
}  // namespace cca
