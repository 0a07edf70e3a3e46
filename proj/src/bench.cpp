// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "cca/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>

#include "cca/kernels.hpp"
#include "cca/kv_cache.hpp"
#include "cca/numerics.hpp"

namespace cca {

std::string_view to_string(BenchVariant v) noexcept {
    switch (v) {
        case BenchVariant::full: return "full";
        case BenchVariant::cca: return "cca";
        case BenchVariant::sink_window: return "sink_window";
    }
    return "cca";
}

std::string_view to_string(BenchMode m) noexcept {
    return m == BenchMode::prefill ? "prefill" : "decode_per_token";
}

std::string_view to_string(GroupPolicy p) noexcept { return p == GroupPolicy::fixed_g ? "fixed_g" : "fixed_m"; }

BenchVariant parse_bench_variant(std::string_view text) {
    if (text == "full") return BenchVariant::full;
    if (text == "cca") return BenchVariant::cca;
    if (text == "sink_window") return BenchVariant::sink_window;
    throw Error("unknown bench variant '" + std::string(text) + "' (expected full, cca or sink_window)");
}

BenchMode parse_bench_mode(std::string_view text) {
    if (text == "prefill") return BenchMode::prefill;
    if (text == "decode_per_token") return BenchMode::decode_per_token;
    throw Error("unknown bench mode '" + std::string(text) + "' (expected prefill or decode_per_token)");
}

GroupPolicy parse_group_policy(std::string_view text) {
    if (text == "fixed_g") return GroupPolicy::fixed_g;
    if (text == "fixed_m") return GroupPolicy::fixed_m;
    throw Error("unknown group policy '" + std::string(text) + "' (expected fixed_g or fixed_m)");
}

void BenchConfig::validate() const {
    attention.validate();
    if (policy == GroupPolicy::fixed_m && group_count < 1) {
        throw Error("fixed_m policy needs group_count >= 1");
    }
    if (sink_window < 1) {
        throw Error("sink window must be >= 1");
    }
    if (repeats < 5) {
        throw Error("bench repeats must be >= 5, got " + std::to_string(repeats));
    }
}

std::size_t BenchConfig::group_size_at(std::size_t length) const {
    if (policy == GroupPolicy::fixed_g) {
        return attention.group_size;
    }
    return std::max<std::size_t>(1, length / group_count);
}

AttentionConfig BenchConfig::attention_at(std::size_t length) const {
    AttentionConfig out = attention;
    out.group_size = group_size_at(length);
    return out;
}

namespace {

std::uint64_t pool_flops_per_group(std::size_t g, std::size_t dh, PoolingMode mode) {
    // scores (weighted / max) + pooling of keys and values
    const std::uint64_t mix = 4ULL * g * dh;
    return mode == PoolingMode::mean ? mix : mix + 2ULL * g * dh;
}

std::size_t cca_keys(std::size_t position, std::size_t g, std::size_t s) {
    const IndexPlan plan = index_plan(position, g, s);
    return plan.global_end + plan.window_len;
}

}  // namespace

std::size_t sink_window_keys(std::size_t position, std::size_t n_sink, std::size_t window) noexcept {
    const std::size_t start = position > window ? position - window + 1 : 1;
    return std::min(n_sink, start - 1) + (position - start + 1);
}

std::uint64_t flops_attention(BenchVariant variant, std::size_t length, const BenchConfig& config, BenchMode mode) {
    config.validate();
    if (length == 0) {
        return 0;
    }
    const std::size_t dh = config.attention.head_dim;
    const std::uint64_t per_key = 4ULL * dh * config.attention.n_heads;
    const std::size_t g = config.group_size_at(length);
    const std::size_t s = config.attention.local_window;
    const std::uint64_t pool = pool_flops_per_group(g, dh, config.attention.pooling) * config.attention.n_heads;

    if (mode == BenchMode::decode_per_token) {
        switch (variant) {
            case BenchVariant::full:
                return per_key * length;
            case BenchVariant::sink_window:
                return per_key * sink_window_keys(length, config.n_sink, config.sink_window);
            case BenchVariant::cca:
                return per_key * cca_keys(length, g, s) + (length % g == 0 ? pool : 0);
        }
    }
    std::uint64_t keys = 0;
    switch (variant) {
        case BenchVariant::full:
            keys = static_cast<std::uint64_t>(length) * (length + 1) / 2;
            return per_key * keys;
        case BenchVariant::sink_window:
            for (std::size_t i = 1; i <= length; ++i) {
                keys += sink_window_keys(i, config.n_sink, config.sink_window);
            }
            return per_key * keys;
        case BenchVariant::cca:
            for (std::size_t i = 1; i <= length; ++i) {
                keys += cca_keys(i, g, s);
            }
            return per_key * keys + pool * (length / g);
    }
    return 0;
}

std::uint64_t kv_bytes(BenchVariant variant, std::size_t length, const BenchConfig& config) {
    const std::uint64_t per_entry = 2ULL * 8 * config.attention.head_dim * config.attention.n_heads;
    std::size_t entries = 0;
    switch (variant) {
        case BenchVariant::full:
            entries = length;
            break;
        case BenchVariant::cca: {
            const std::size_t g = config.group_size_at(length);
            entries = length / g + std::min(length, config.attention.local_window + g);
            break;
        }
        case BenchVariant::sink_window:
            entries = std::min(length, config.n_sink + config.sink_window);
            break;
    }
    return per_entry * entries;
}

Matrix sink_window_attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t n_sink,
                             std::size_t window) {
    if (window < 1) {
        throw Error("sink window must be >= 1");
    }
    if (q.rows() != k.rows() || q.rows() != v.rows() || q.cols() != k.cols()) {
        throw Error("sink-window attention shape mismatch: " + shape_string(q) + ", " + shape_string(k) + ", " +
                    shape_string(v));
    }
    const std::size_t dim = q.cols();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    Matrix out(q.rows(), v.cols());
    std::vector<double> weights;
    for (std::size_t i = 1; i <= q.rows(); ++i) {
        const std::size_t start = i > window ? i - window + 1 : 1;
        const std::size_t sinks = std::min(n_sink, start - 1);
        detail::KeyValueRun runs[2];
        std::size_t n_runs = 0;
        if (sinks > 0) {
            runs[n_runs++] = {k.row(0).data(), v.row(0).data(), sinks};
        }
        runs[n_runs++] = {k.row(start - 1).data(), v.row(start - 1).data(), i - start + 1};
        detail::attend(q.row(i - 1), std::span<const detail::KeyValueRun>(runs, n_runs), dim, scale, out.row(i - 1),
                       weights);
    }
    return out;
}

ExpandedWeights sink_window_weights(const Matrix& q, const Matrix& k, std::size_t n_sink, std::size_t window) {
    const std::size_t length = q.rows();
    if (length > kMaxExpansionLength) {
        throw Error("sink-window expansion limited to L <= " + std::to_string(kMaxExpansionLength));
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    ExpandedWeights out{Matrix(length, length), std::vector<WeightSource>(length * length, WeightSource::none)};
    std::vector<double> logits;
    std::vector<std::size_t> cols;
    for (std::size_t i = 1; i <= length; ++i) {
        logits.clear();
        cols.clear();
        const std::size_t start = i > window ? i - window + 1 : 1;
        for (std::size_t t = 1; t <= i; ++t) {
            if (t <= n_sink || t >= start) {
                double z = 0.0;
                for (std::size_t c = 0; c < q.cols(); ++c) {
                    z += q(i - 1, c) * k(t - 1, c);
                }
                logits.push_back(z * scale);
                cols.push_back(t);
            }
        }
        const std::vector<double> p = stable_softmax(logits);
        for (std::size_t n = 0; n < cols.size(); ++n) {
            out.a(i - 1, cols[n] - 1) = p[n];
            out.provenance[(i - 1) * length + cols[n] - 1] = WeightSource::local;
        }
    }
    return out;
}

BenchRecord ledger_record(BenchVariant variant, BenchMode mode, std::size_t length, const BenchConfig& config) {
    BenchRecord r;
    r.variant = variant;
    r.mode = mode;
    r.length = length;
    switch (variant) {
        case BenchVariant::full:
            break;
        case BenchVariant::cca:
            r.g = config.group_size_at(length);
            r.s = config.attention.local_window;
            break;
        case BenchVariant::sink_window:
            r.g = config.n_sink;
            r.s = config.sink_window;
            break;
    }
    r.heads = config.attention.n_heads;
    r.head_dim = config.attention.head_dim;
    r.flops_attention = flops_attention(variant, length, config, mode);
    r.kv_bytes = kv_bytes(variant, length, config);
    return r;
}

namespace {

struct HeadInputs {
    std::vector<Matrix> q, k, v;
};

HeadInputs random_inputs(std::size_t length, const BenchConfig& config) {
    HeadInputs in;
    const std::size_t dh = config.attention.head_dim;
    for (std::size_t h = 0; h < config.attention.n_heads; ++h) {
        const std::uint64_t base = config.seed * 1000003ULL + 3 * h;
        in.q.push_back(seeded_init(length, dh, base + 1, 1.0));
        in.k.push_back(seeded_init(length, dh, base + 2, 1.0));
        in.v.push_back(seeded_init(length, dh, base + 3, 1.0));
    }
    return in;
}

Matrix concat_heads(const std::vector<Matrix>& parts, std::size_t rows) {
    const std::size_t dh = parts.front().cols();
    Matrix out(rows, dh * parts.size());
    for (std::size_t h = 0; h < parts.size(); ++h) {
        out.set_col_block(h * dh, parts[h].row_block(0, rows));
    }
    return out;
}

template <typename Setup, typename Run>
double median_ms(std::size_t repeats, Setup&& setup, Run&& run) {
    std::vector<double> samples;
    for (std::size_t rep = 0; rep <= repeats; ++rep) {
        setup();
        const auto start = std::chrono::steady_clock::now();
        run();
        const auto stop = std::chrono::steady_clock::now();
        if (rep > 0) {  // first pass is the warm-up
            samples.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
        }
    }
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    return n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

volatile double g_sink = 0.0;

}  // namespace

BenchRecord measure(BenchVariant variant, BenchMode mode, std::size_t length, const BenchConfig& config) {
    BenchRecord record = ledger_record(variant, mode, length, config);
    if (length == 0) {
        return record;
    }
    const AttentionConfig att = config.attention_at(length);
    const HeadInputs in = random_inputs(length, config);
    const std::size_t heads = att.n_heads;
    const std::size_t dh = att.head_dim;

    if (mode == BenchMode::prefill) {
        record.wall_ms = median_ms(
            config.repeats, [] {},
            [&] {
                for (std::size_t h = 0; h < heads; ++h) {
                    Matrix out;
                    if (variant == BenchVariant::sink_window) {
                        out = sink_window_attention(in.q[h], in.k[h], in.v[h], config.n_sink, config.sink_window);
                    } else {
                        const AttentionVariant av =
                            variant == BenchVariant::full ? AttentionVariant::full : AttentionVariant::cca;
                        out = attention_head_forward(in.q[h], in.k[h], in.v[h], att, av, false).output;
                    }
                    g_sink = g_sink + out(length - 1, 0);
                }
            });
        return record;
    }

    // decode_per_token: time producing token L with L - 1 tokens already processed.
    if (variant == BenchVariant::cca) {
        DecodeCache warm(att);
        if (length > 1) {
            warm.prefill(concat_heads(in.q, length - 1), concat_heads(in.k, length - 1),
                         concat_heads(in.v, length - 1));
        }
        const Matrix last_q = concat_heads(in.q, length).row_block(length - 1, 1);
        const Matrix last_k = concat_heads(in.k, length).row_block(length - 1, 1);
        const Matrix last_v = concat_heads(in.v, length).row_block(length - 1, 1);
        DecodeCache cache = warm;
        record.wall_ms = median_ms(
            config.repeats, [&] { cache = warm; },
            [&] {
                const std::vector<double> out = cache.append(last_q.row(0), last_k.row(0), last_v.row(0));
                g_sink = g_sink + out[0];
            });
        return record;
    }
    std::vector<double> out(dh);
    std::vector<double> weights;
    const double scale = att.score_scale();
    record.wall_ms = median_ms(
        config.repeats, [] {},
        [&] {
            for (std::size_t h = 0; h < heads; ++h) {
                detail::KeyValueRun runs[2];
                std::size_t n_runs = 0;
                std::size_t start = 1;
                if (variant == BenchVariant::sink_window) {
                    start = length > config.sink_window ? length - config.sink_window + 1 : 1;
                    const std::size_t sinks = std::min(config.n_sink, start - 1);
                    if (sinks > 0) {
                        runs[n_runs++] = {in.k[h].data(), in.v[h].data(), sinks};
                    }
                }
                runs[n_runs++] = {in.k[h].row(start - 1).data(), in.v[h].row(start - 1).data(), length - start + 1};
                detail::attend(in.q[h].row(length - 1), std::span<const detail::KeyValueRun>(runs, n_runs), dh,
                               scale, out, weights);
                g_sink = g_sink + out[0];
            }
        });
    return record;
}

namespace {

std::string cpu_model() {
    std::ifstream in("/proc/cpuinfo");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("model name", 0) == 0) {
            const std::size_t colon = line.find(':');
            if (colon != std::string::npos) {
                return line.substr(line.find_first_not_of(' ', colon + 1));
            }
        }
    }
    return "unknown";
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<BenchRecord>& records, const BenchConfig& config) {
    out << "# cpu: " << cpu_model() << '\n';
    out << "# hardware_threads: " << std::thread::hardware_concurrency() << '\n';
    out << "# kernels: " << kernels::isa_name(kernels::active_isa()) << '\n';
    out << "# group_policy: " << to_string(config.policy);
    if (config.policy == GroupPolicy::fixed_m) {
        out << " (m=" << config.group_count << ")";
    }
    out << ", pooling: " << to_string(config.attention.pooling) << '\n';
    out << "# flops_attention: 2 per multiply-add; scores, value mixing and pooling only, projections excluded\n";
    out << "# sink_window rows: g column = sink tokens, s column = window; full rows: g = s = 0\n";
    out << "# wall_ms: median of " << config.repeats << " runs after 1 warm-up\n";
    out << kBenchCsvHeader << '\n';
    for (const BenchRecord& r : records) {
        std::ostringstream ms;
        ms << std::fixed << std::setprecision(4) << r.wall_ms;
        out << to_string(r.variant) << ',' << to_string(r.mode) << ',' << r.length << ',' << r.g << ',' << r.s << ','
            << r.heads << ',' << r.head_dim << ',' << r.flops_attention << ',' << r.kv_bytes << ',' << ms.str()
            << '\n';
    }
}

std::vector<BenchRecord> run_suite(const BenchConfig& config, const std::filesystem::path& output) {
    config.validate();
    std::ofstream file(output, std::ios::trunc);
    if (!file) {
        throw Error("cannot write bench output " + output.string());
    }
    std::vector<BenchRecord> records;
    for (BenchVariant variant : config.variants) {
        for (BenchMode mode : config.modes) {
            for (std::size_t length : config.lengths) {
                records.push_back(measure(variant, mode, length, config));
            }
        }
    }
    write_csv(file, records, config);
    if (!file) {
        throw Error("failed writing bench output " + output.string());
    }
    return records;
}

}  // namespace cca
