// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "cca/kv_cache.hpp"

#include <algorithm>
#include <string>

#include "cca/numerics.hpp"

namespace cca {

DecodeCache::DecodeCache(const AttentionConfig& config) : config_(config) {
    config_.validate();
    reset_storage();
}

void DecodeCache::reset_storage() {
    const std::size_t dh = config_.head_dim;
    heads_.assign(config_.n_heads, HeadState{});
    for (HeadState& h : heads_) {
        h.ring_k.assign(capacity() * dh, 0.0);
        h.ring_k_raw.assign(capacity() * dh, 0.0);
        h.ring_v.assign(capacity() * dh, 0.0);
    }
}

void DecodeCache::reconfigure(std::size_t group_size, std::size_t local_window) {
    if (group_size == config_.group_size && local_window == config_.local_window) {
        return;
    }
    if (tokens_ > 0) {
        throw Error("cannot change group size or window mid-stream (cache holds " + std::to_string(tokens_) +
                    " tokens)");
    }
    AttentionConfig next = config_;
    next.group_size = group_size;
    next.local_window = local_window;
    next.validate();
    config_ = next;
    reset_storage();
}

void DecodeCache::check_row(std::span<const double> row, const char* name) const {
    if (row.size() != config_.inner_dim()) {
        throw Error(std::string("decode ") + name + " row has " + std::to_string(row.size()) + " values, expected " +
                    std::to_string(config_.inner_dim()));
    }
}

void DecodeCache::pool_latest_group(std::size_t head, std::span<const double> query) {
    const std::size_t g = config_.group_size;
    const std::size_t dh = config_.head_dim;
    HeadState& h = heads_[head];
    // Gather the group (tokens t-g+1 .. t) contiguously: encoded keys, raw keys, values.
    scratch_.resize(3 * g * dh + g);
    double* score_k = scratch_.data();
    double* raw_k = score_k + g * dh;
    double* raw_v = raw_k + g * dh;
    std::span<double> phi(raw_v + g * dh, g);
    for (std::size_t r = 0; r < g; ++r) {
        const std::size_t s = slot(tokens_ - g + 1 + r) * dh;
        std::copy_n(h.ring_k.data() + s, dh, score_k + r * dh);
        std::copy_n(h.ring_k_raw.data() + s, dh, raw_k + r * dh);
        std::copy_n(h.ring_v.data() + s, dh, raw_v + r * dh);
    }
    const std::size_t m = h.core_k.size() / dh;
    h.core_k.resize((m + 1) * dh);
    h.core_v.resize((m + 1) * dh);
    std::span<double> ck(h.core_k.data() + m * dh, dh);
    std::span<double> cv(h.core_v.data() + m * dh, dh);
    detail::pool_group(query, score_k, raw_k, raw_v, dh, config_.pooling, phi, ck, cv);
    apply_rope_inplace(ck, group_middle_token(m + 1, g) - 1, config_.rope());
}

std::vector<double> DecodeCache::append(std::span<const double> q, std::span<const double> k,
                                        std::span<const double> v) {
    check_row(q, "query");
    check_row(k, "key");
    check_row(v, "value");
    const std::size_t dh = config_.head_dim;
    const RopeParams rope = config_.rope();
    const std::size_t position = tokens_ + 1;
    const std::size_t s = slot(position);
    const IndexPlan plan = index_plan(position, config_.group_size, config_.local_window);

    std::vector<double> out(config_.inner_dim());
    std::vector<double> query(dh);
    std::vector<double> weights;
    tokens_ = position;
    for (std::size_t head = 0; head < config_.n_heads; ++head) {
        HeadState& h = heads_[head];
        const std::size_t off = head * dh;
        std::copy_n(k.data() + off, dh, h.ring_k_raw.data() + s * dh);
        std::copy_n(k.data() + off, dh, h.ring_k.data() + s * dh);
        std::copy_n(v.data() + off, dh, h.ring_v.data() + s * dh);
        apply_rope_inplace(std::span<double>(h.ring_k.data() + s * dh, dh), position - 1, rope);
        std::copy_n(q.data() + off, dh, query.data());
        apply_rope_inplace(query, position - 1, rope);

        if (position % config_.group_size == 0) {
            pool_latest_group(head, query);
        }

        detail::KeyValueRun runs[3];
        std::size_t n_runs = 0;
        if (plan.global_end > 0) {
            runs[n_runs++] = {h.core_k.data(), h.core_v.data(), plan.global_end};
        }
        // Local window tokens local_start..position, split where the ring wraps.
        std::size_t first = plan.local_start;
        while (first <= position) {
            const std::size_t start_slot = slot(first);
            const std::size_t run = std::min(position - first + 1, capacity() - start_slot);
            runs[n_runs++] = {h.ring_k.data() + start_slot * dh, h.ring_v.data() + start_slot * dh, run};
            first += run;
        }
        detail::attend(query, std::span<const detail::KeyValueRun>(runs, n_runs), dh, config_.score_scale(),
                       std::span<double>(out.data() + off, dh), weights);
    }
    return out;
}

Matrix DecodeCache::prefill(const Matrix& q, const Matrix& k, const Matrix& v) {
    if (tokens_ != 0) {
        throw Error("prefill requires an empty cache, this one holds " + std::to_string(tokens_) + " tokens");
    }
    const std::size_t inner = config_.inner_dim();
    if (q.cols() != inner || k.cols() != inner || v.cols() != inner || k.rows() != q.rows() || v.rows() != q.rows()) {
        throw Error("prefill expects three L x " + std::to_string(inner) + " matrices");
    }
    const std::size_t length = q.rows();
    const std::size_t dh = config_.head_dim;
    Matrix out(length, inner);
    const std::size_t keep_from = length > capacity() ? length - capacity() + 1 : 1;
    for (std::size_t head = 0; head < config_.n_heads; ++head) {
        const std::size_t first = head * dh;
        const Matrix k_raw = k.col_block(first, dh);
        const Matrix v_head = v.col_block(first, dh);
        HeadTrace trace =
            attention_head_forward(q.col_block(first, dh), k_raw, v_head, config_, AttentionVariant::cca, false);
        out.set_col_block(first, trace.output);

        HeadState& h = heads_[head];
        h.core_k.assign(trace.core_k_encoded.values().begin(), trace.core_k_encoded.values().end());
        h.core_v.assign(trace.core.core_v.values().begin(), trace.core.core_v.values().end());
        for (std::size_t t = keep_from; t <= length; ++t) {
            const std::size_t s = slot(t) * dh;
            std::copy_n(trace.k.row(t - 1).data(), dh, h.ring_k.data() + s);
            std::copy_n(k_raw.row(t - 1).data(), dh, h.ring_k_raw.data() + s);
            std::copy_n(v_head.row(t - 1).data(), dh, h.ring_v.data() + s);
        }
    }
    tokens_ = length;
    return out;
}

CacheStats DecodeCache::stats() const noexcept {
    CacheStats st;
    st.tokens = tokens_;
    st.core_entries = heads_.empty() ? 0 : heads_.front().core_k.size() / config_.head_dim;
    st.raw_entries = std::min(tokens_, capacity());
    st.pending_entries = tokens_ % config_.group_size;
    st.kv_bytes = static_cast<std::uint64_t>(8) * config_.head_dim * config_.n_heads * 2 *
                  (st.core_entries + st.raw_entries);
    return st;
}

Matrix DecodeCache::core_keys(std::size_t head) const {
    const HeadState& h = heads_.at(head);
    return Matrix(h.core_k.size() / config_.head_dim, config_.head_dim, h.core_k);
}

Matrix DecodeCache::core_values(std::size_t head) const {
    const HeadState& h = heads_.at(head);
    return Matrix(h.core_v.size() / config_.head_dim, config_.head_dim, h.core_v);
}

std::vector<std::size_t> DecodeCache::ring_positions() const {
    std::vector<std::size_t> out;
    const std::size_t count = std::min(tokens_, capacity());
    for (std::size_t t = tokens_ - count + 1; t <= tokens_; ++t) {
        out.push_back(t);
    }
    return out;
}

Matrix DecodeCache::gather_ring(std::size_t head, const std::vector<double> HeadState::*field) const {
    const HeadState& h = heads_.at(head);
    const std::vector<std::size_t> positions = ring_positions();
    const std::size_t dh = config_.head_dim;
    Matrix out(positions.size(), dh);
    for (std::size_t r = 0; r < positions.size(); ++r) {
        std::copy_n((h.*field).data() + slot(positions[r]) * dh, dh, out.row(r).data());
    }
    return out;
}

Matrix DecodeCache::ring_keys(std::size_t head) const { return gather_ring(head, &HeadState::ring_k); }

Matrix DecodeCache::ring_values(std::size_t head) const { return gather_ring(head, &HeadState::ring_v); }

}  // namespace cca
