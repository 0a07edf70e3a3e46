// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "cca/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cca/kernels.hpp"

namespace cca {

std::string_view to_string(PoolingMode mode) noexcept {
    switch (mode) {
        case PoolingMode::weighted: return "weighted";
        case PoolingMode::mean: return "mean";
        case PoolingMode::max: return "max";
    }
    return "weighted";
}

PoolingMode parse_pooling_mode(std::string_view text) {
    if (text == "weighted") return PoolingMode::weighted;
    if (text == "mean") return PoolingMode::mean;
    if (text == "max") return PoolingMode::max;
    throw Error("unknown pooling mode '" + std::string(text) + "' (expected weighted, mean or max)");
}

std::string_view to_string(AttentionVariant variant) noexcept {
    return variant == AttentionVariant::full ? "full" : "cca";
}

AttentionVariant parse_attention_variant(std::string_view text) {
    if (text == "cca") return AttentionVariant::cca;
    if (text == "full") return AttentionVariant::full;
    throw Error("unknown attention variant '" + std::string(text) + "' (expected cca or full)");
}

void AttentionConfig::validate() const {
    if (group_size < 1) throw Error("group_size must be >= 1");
    if (local_window < 1) throw Error("local_window must be >= 1");
    if (n_heads < 1) throw Error("n_heads must be >= 1");
    if (head_dim < 1) throw Error("head_dim must be >= 1");
    rope().validate();
}

double AttentionConfig::score_scale() const { return 1.0 / std::sqrt(static_cast<double>(head_dim)); }

RopeParams AttentionConfig::rope() const { return RopeParams{rope_base, head_dim, rope_enabled}; }

GroupPartition partition_groups(std::size_t length, std::size_t group_size) {
    if (group_size < 1) {
        throw Error("group_size must be >= 1");
    }
    GroupPartition out;
    out.group_count = length / group_size;
    out.groups.reserve(out.group_count);
    for (std::size_t p = 1; p <= out.group_count; ++p) {
        out.groups.push_back({(p - 1) * group_size + 1, p * group_size});
    }
    out.trailing_count = length % group_size;
    out.trailing_first = out.trailing_count > 0 ? out.group_count * group_size + 1 : 0;
    return out;
}

IndexPlan index_plan(std::size_t position, std::size_t group_size, std::size_t local_window) {
    if (position < 1) {
        throw Error("query positions are 1-indexed, got 0");
    }
    if (group_size < 1) {
        throw Error("group_size must be >= 1");
    }
    IndexPlan plan;
    plan.global_end = position > local_window ? (position - local_window) / group_size : 0;
    plan.local_start = plan.global_end * group_size + 1;
    plan.window_len = position - plan.global_end * group_size;
    return plan;
}

std::size_t group_middle_token(std::size_t group, std::size_t group_size) noexcept {
    return (group - 1) * group_size + (group_size + 1) / 2;
}

CoreTokenSet pool_core_tokens(const Matrix& score_q, const Matrix& score_k, const Matrix& raw_k,
                              const Matrix& raw_v, std::size_t group_size, PoolingMode mode) {
    const std::size_t length = raw_k.rows();
    if (score_q.rows() != length || score_k.rows() != length || raw_v.rows() != length) {
        throw Error("pool_core_tokens: mismatched row counts");
    }
    if (score_q.cols() != score_k.cols() || raw_k.cols() != raw_v.cols()) {
        throw Error("pool_core_tokens: mismatched widths");
    }
    if (group_size < 1) {
        throw Error("group_size must be >= 1");
    }
    const std::size_t g = group_size;
    const std::size_t m = length / g;
    const std::size_t dim = raw_k.cols();
    CoreTokenSet core;
    core.group_size = g;
    core.phi = Matrix(m, g);
    core.core_k = Matrix(m, dim);
    core.core_v = Matrix(m, dim);

    for (std::size_t p = 0; p < m; ++p) {
        const std::size_t base = p * g;
        detail::pool_group(score_q.row(base + g - 1), score_k.row(base).data(), raw_k.row(base).data(),
                           raw_v.row(base).data(), dim, mode, core.phi.row(p), core.core_k.row(p),
                           core.core_v.row(p));
    }
    return core;
}

Matrix encode_positions(const Matrix& x, const RopeParams& rope) {
    Matrix out = x;
    if (!rope.enabled) {
        return out;
    }
    for (std::size_t r = 0; r < out.rows(); ++r) {
        apply_rope_inplace(out.row(r), r, rope);
    }
    return out;
}

Matrix encode_core_keys(const Matrix& core_k, std::size_t group_size, const RopeParams& rope) {
    Matrix out = core_k;
    if (!rope.enabled) {
        return out;
    }
    for (std::size_t p = 0; p < out.rows(); ++p) {
        apply_rope_inplace(out.row(p), group_middle_token(p + 1, group_size) - 1, rope);
    }
    return out;
}

namespace detail {

void attend(std::span<const double> q, std::span<const KeyValueRun> runs, std::size_t dim, double scale,
            std::span<double> out, std::vector<double>& weights) {
    const auto& kern = kernels::active();
    std::size_t total = 0;
    for (const KeyValueRun& run : runs) {
        total += run.count;
    }
    weights.resize(total);
    std::size_t offset = 0;
    for (const KeyValueRun& run : runs) {
        kern.scores(q.data(), run.keys, run.count, dim, scale, weights.data() + offset);
        offset += run.count;
    }
    stable_softmax_inplace(weights);
    std::fill(out.begin(), out.end(), 0.0);
    offset = 0;
    for (const KeyValueRun& run : runs) {
        kern.mix(weights.data() + offset, run.values, run.count, dim, out.data());
        offset += run.count;
    }
    kernels::FlopCounter::record(4 * total * dim);
}

void pool_group(std::span<const double> last_query, const double* score_keys, const double* raw_keys,
                const double* raw_values, std::size_t dim, PoolingMode mode, std::span<double> phi,
                std::span<double> core_k, std::span<double> core_v) {
    const auto& kern = kernels::active();
    const std::size_t g = phi.size();
    const std::size_t score_dim = last_query.size();
    if (mode == PoolingMode::mean) {
        std::fill(phi.begin(), phi.end(), 1.0 / static_cast<double>(g));
    } else {
        const double scale = 1.0 / std::sqrt(static_cast<double>(score_dim));
        kern.scores(last_query.data(), score_keys, g, score_dim, scale, phi.data());
        kernels::FlopCounter::record(2 * g * score_dim);
        if (mode == PoolingMode::weighted) {
            stable_softmax_inplace(phi);
        } else {
            const std::size_t best = static_cast<std::size_t>(std::max_element(phi.begin(), phi.end()) - phi.begin());
            std::fill(phi.begin(), phi.end(), 0.0);
            phi[best] = 1.0;
        }
    }
    std::fill(core_k.begin(), core_k.end(), 0.0);
    std::fill(core_v.begin(), core_v.end(), 0.0);
    kern.mix(phi.data(), raw_keys, g, dim, core_k.data());
    kern.mix(phi.data(), raw_values, g, dim, core_v.data());
    kernels::FlopCounter::record(4 * g * dim);
}

}  // namespace detail

namespace {

void check_qkv(const Matrix& q, const Matrix& k, const Matrix& v) {
    if (q.rows() != k.rows() || q.rows() != v.rows()) {
        throw Error("q, k, v row counts differ: " + shape_string(q) + ", " + shape_string(k) + ", " +
                    shape_string(v));
    }
    if (q.cols() != k.cols() || k.cols() != v.cols()) {
        throw Error("q, k, v widths differ: " + shape_string(q) + ", " + shape_string(k) + ", " +
                    shape_string(v));
    }
}

// Row loop shared by the fused and full paths. `core_k` / `core_v` may be empty for full attention.
void run_rows(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& core_k, const Matrix& core_v,
              const std::vector<IndexPlan>& plans, Matrix& out, std::vector<std::vector<double>>* keep) {
    const std::size_t dim = q.cols();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    std::vector<double> weights;
    if (keep != nullptr) {
        keep->assign(q.rows(), {});
    }
    for (std::size_t r = 0; r < q.rows(); ++r) {
        const IndexPlan& plan = plans[r];
        detail::KeyValueRun runs[2];
        std::size_t n_runs = 0;
        if (plan.global_end > 0) {
            runs[n_runs++] = {core_k.data(), core_v.data(), plan.global_end};
        }
        runs[n_runs++] = {k.row(plan.local_start - 1).data(), v.row(plan.local_start - 1).data(), plan.window_len};
        detail::attend(q.row(r), std::span<const detail::KeyValueRun>(runs, n_runs), dim, scale, out.row(r),
                       weights);
        if (keep != nullptr) {
            (*keep)[r] = weights;
        }
    }
}

std::vector<IndexPlan> plans_for(std::size_t length, const AttentionConfig& config, AttentionVariant variant) {
    std::vector<IndexPlan> plans(length);
    for (std::size_t i = 1; i <= length; ++i) {
        plans[i - 1] = variant == AttentionVariant::full ? IndexPlan{0, 1, i}
                                                         : index_plan(i, config.group_size, config.local_window);
    }
    return plans;
}

}  // namespace

Matrix fused_cca_attention(const Matrix& q, const Matrix& k, const Matrix& v, const CoreTokenSet& core,
                           const AttentionConfig& config) {
    config.validate();
    check_qkv(q, k, v);
    if (core.group_size != config.group_size) {
        throw Error("core group size mismatch: core built with g=" + std::to_string(core.group_size) +
                    ", config has g=" + std::to_string(config.group_size));
    }
    const std::size_t length = q.rows();
    if (length > 0 && core.group_count() < length / config.group_size) {
        throw Error("core token set covers fewer groups than the sequence needs");
    }
    if (core.group_count() > 0 && core.core_k.cols() != q.cols()) {
        throw Error("core key width differs from head width");
    }
    Matrix out(length, v.cols());
    run_rows(q, k, v, core.core_k, core.core_v, plans_for(length, config, AttentionVariant::cca), out, nullptr);
    return out;
}

Matrix full_causal_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
    check_qkv(q, k, v);
    Matrix out(q.rows(), v.cols());
    const Matrix none;
    AttentionConfig unused;
    run_rows(q, k, v, none, none, plans_for(q.rows(), unused, AttentionVariant::full), out, nullptr);
    return out;
}

HeadTrace attention_head_forward(const Matrix& q_raw, const Matrix& k_raw, const Matrix& v,
                                 const AttentionConfig& config, AttentionVariant variant, bool keep_weights) {
    config.validate();
    check_qkv(q_raw, k_raw, v);
    const RopeParams rope = config.rope();
    HeadTrace trace;
    trace.variant = variant;
    trace.q = encode_positions(q_raw, rope);
    trace.k = encode_positions(k_raw, rope);
    if (variant == AttentionVariant::cca) {
        trace.core = pool_core_tokens(trace.q, trace.k, k_raw, v, config.group_size, config.pooling);
        trace.core_k_encoded = encode_core_keys(trace.core.core_k, config.group_size, rope);
    } else {
        trace.core.group_size = config.group_size;
    }
    trace.plans = plans_for(q_raw.rows(), config, variant);
    trace.output = Matrix(q_raw.rows(), v.cols());
    run_rows(trace.q, trace.k, v, trace.core_k_encoded, trace.core.core_v, trace.plans, trace.output,
             keep_weights ? &trace.weights : nullptr);
    return trace;
}

ProjectionWeights ProjectionWeights::random(std::size_t d_model, const AttentionConfig& config, std::uint64_t seed,
                                            double scale) {
    const std::size_t inner = config.inner_dim();
    return ProjectionWeights{seeded_init(d_model, inner, seed, scale), seeded_init(d_model, inner, seed + 1, scale),
                             seeded_init(d_model, inner, seed + 2, scale),
                             seeded_init(inner, d_model, seed + 3, scale)};
}

void ProjectionWeights::validate(std::size_t d_model, const AttentionConfig& config) const {
    const std::size_t inner = config.inner_dim();
    const auto expect = [&](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
        if (m.rows() != r || m.cols() != c) {
            throw Error(std::string(name) + " has shape " + shape_string(m) + ", expected " + std::to_string(r) +
                        "x" + std::to_string(c) + " for d=" + std::to_string(d_model) + ", heads*d_h=" +
                        std::to_string(inner));
        }
    };
    expect(wq, d_model, inner, "Wq");
    expect(wk, d_model, inner, "Wk");
    expect(wv, d_model, inner, "Wv");
    expect(wo, inner, d_model, "Wo");
}

Matrix multi_head_attention(const Matrix& x, const ProjectionWeights& weights, const AttentionConfig& config,
                            AttentionVariant variant) {
    config.validate();
    weights.validate(x.cols(), config);
    const Matrix q = matmul(x, weights.wq);
    const Matrix k = matmul(x, weights.wk);
    const Matrix v = matmul(x, weights.wv);
    Matrix heads(x.rows(), config.inner_dim());
    for (std::size_t h = 0; h < config.n_heads; ++h) {
        const std::size_t first = h * config.head_dim;
        HeadTrace trace = attention_head_forward(q.col_block(first, config.head_dim), k.col_block(first, config.head_dim),
                                                 v.col_block(first, config.head_dim), config, variant, false);
        heads.set_col_block(first, trace.output);
    }
    return matmul(heads, weights.wo);
}

}  // namespace cca
