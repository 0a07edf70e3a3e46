// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "cca/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "cca/bench.hpp"
#include "cca/expansion.hpp"
#include "cca/kernels.hpp"
#include "cca/kv_cache.hpp"
#include "cca/numerics.hpp"

namespace cca {

double gradient_rel_error(double analytic, double numeric) noexcept {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-4});
    return std::fabs(analytic - numeric) / denom;
}

namespace {

constexpr PoolingMode kModes[] = {PoolingMode::weighted, PoolingMode::mean, PoolingMode::max};

struct Head {
    Matrix q, k, v;
};

Head random_head(std::size_t length, std::size_t dim, std::uint64_t seed) {
    return {seeded_init(length, dim, seed * 3 + 1, 1.0), seeded_init(length, dim, seed * 3 + 2, 1.0),
            seeded_init(length, dim, seed * 3 + 3, 1.0)};
}

std::string sci(double x) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << x;
    return s.str();
}

// Accumulates the worst observed value and compares it to a bound.
struct Worst {
    double value = 0.0;
    void see(double x) { value = std::max(value, x); }
    bool within(double bound) const { return value <= bound; }
};

AttentionConfig head_config(const VerifyOptions& o, std::size_t dim, std::size_t g, std::size_t s, PoolingMode mode,
                            bool rope) {
    AttentionConfig c = o.attention;
    c.n_heads = 1;
    c.head_dim = dim;
    c.group_size = g;
    c.local_window = s;
    c.pooling = mode;
    c.rope_enabled = rope;
    return c;
}

CheckResult check_softmax(const VerifyOptions& o) {
    Worst w;
    for (std::size_t n = 0; n < o.seeds; ++n) {
        const Matrix x = seeded_init(1, 17, o.seed + n, 20.0);
        std::vector<double> shifted(x.values().begin(), x.values().end());
        for (double& e : shifted) {
            e += 123.25;
        }
        const std::vector<double> a = stable_softmax(x.values());
        const std::vector<double> b = stable_softmax(shifted);
        double sum = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            w.see(std::fabs(a[i] - b[i]));
            sum += a[i];
        }
        w.see(std::fabs(sum - 1.0));
    }
    return {"softmax_shift_invariance", w.within(1e-12), "max err " + sci(w.value)};
}

CheckResult check_rope(const VerifyOptions& o) {
    const RopeParams rope{o.attention.rope_base, 8, true};
    Worst w;
    for (std::size_t n = 0; n < o.seeds; ++n) {
        const Matrix q = seeded_init(1, 8, o.seed + 100 + n, 1.0);
        const Matrix k = seeded_init(1, 8, o.seed + 200 + n, 1.0);
        const std::size_t delta = 5;
        const double ref = kernels::dot(apply_rope(q.values(), delta, rope), k.values());
        for (std::size_t p : {0, 7, 100}) {
            const std::vector<double> qr = apply_rope(q.values(), p + delta, rope);
            const std::vector<double> kr = apply_rope(k.values(), p, rope);
            w.see(std::fabs(kernels::dot(qr, kr) - ref));
            w.see(std::fabs(std::sqrt(kernels::dot(qr, qr)) - std::sqrt(kernels::dot(q.values(), q.values()))));
        }
    }
    return {"rope_relative_position_and_norm", w.within(1e-12), "max err " + sci(w.value)};
}

CheckResult check_kernels(const VerifyOptions& o) {
    const kernels::KernelTable& ref = kernels::scalar::table();
    const kernels::KernelTable& fast = kernels::active();
    Worst w;
    for (std::size_t n = 0; n < o.seeds; ++n) {
        const std::size_t dim = 1 + (o.seed + n * 7) % 37;
        const Matrix a = seeded_init(9, dim, o.seed + 300 + n, 1.0);
        const Matrix b = seeded_init(9, dim, o.seed + 400 + n, 1.0);
        std::vector<double> s1(9), s2(9), m1(dim, 0.0), m2(dim, 0.0);
        ref.scores(a.data(), b.data(), 9, dim, 0.5, s1.data());
        fast.scores(a.data(), b.data(), 9, dim, 0.5, s2.data());
        ref.mix(s1.data(), b.data(), 9, dim, m1.data());
        fast.mix(s1.data(), b.data(), 9, dim, m2.data());
        for (std::size_t i = 0; i < 9; ++i) {
            w.see(std::fabs(s1[i] - s2[i]));
        }
        for (std::size_t i = 0; i < dim; ++i) {
            w.see(std::fabs(m1[i] - m2[i]));
        }
    }
    return {"kernels_scalar_vs_" + std::string(fast.name), w.within(1e-12), "max err " + sci(w.value)};
}

CheckResult check_oracle_g1(const VerifyOptions& o) {
    Worst w;
    for (std::size_t n = 0; n < o.seeds; ++n) {
        for (std::size_t length : {1, 3, 17, 32, 64}) {
            const Head h = random_head(length, 8, o.seed + n);
            const AttentionConfig c = head_config(o, 8, 1, 1 + n % 5, PoolingMode::weighted, false);
            const Matrix fused = attention_head_forward(h.q, h.k, h.v, c, AttentionVariant::cca, false).output;
            w.see(max_abs_diff(fused, full_causal_attention(h.q, h.k, h.v)));
        }
    }
    return {"oracle_g1_equals_full", w.within(1e-10), "max err " + sci(w.value)};
}

CheckResult check_short_context(const VerifyOptions& o) {
    Worst w;
    for (std::size_t n = 0; n < o.seeds; ++n) {
        for (std::size_t g : {4, 16}) {
            const std::size_t s = 64;
            const Head h = random_head(s, 8, o.seed + 10 + n);
            for (PoolingMode mode : kModes) {
                const AttentionConfig c = head_config(o, 8, g, s, mode, false);
                const Matrix fused = attention_head_forward(h.q, h.k, h.v, c, AttentionVariant::cca, false).output;
                w.see(max_abs_diff(fused, full_causal_attention(h.q, h.k, h.v)));
            }
        }
    }
    return {"short_context_equals_full", w.within(1e-10), "max err " + sci(w.value)};
}

CheckResult check_causality(const VerifyOptions& o) {
    const std::size_t length = 40;
    const std::size_t cut = 23;
    bool ok = true;
    for (std::size_t n = 0; n < o.seeds && ok; ++n) {
        Head h = random_head(length, 8, o.seed + 20 + n);
        const AttentionConfig c = head_config(o, 8, 4, 8, o.attention.pooling, o.attention.rope_enabled);
        const Matrix before = attention_head_forward(h.q, h.k, h.v, c, AttentionVariant::cca, false).output;
        for (std::size_t r = cut; r < length; ++r) {
            for (std::size_t col = 0; col < 8; ++col) {
                h.q(r, col) += 0.5;
                h.k(r, col) -= 0.25;
                h.v(r, col) += 1.0;
            }
        }
        const Matrix after = attention_head_forward(h.q, h.k, h.v, c, AttentionVariant::cca, false).output;
        ok = before.row_block(0, cut) == after.row_block(0, cut);
    }
    return {"causality_prefix_rows_unchanged", ok, ok ? "bit-identical" : "prefix row changed"};
}

Matrix phi_times(const CoreTokenSet& core, const Matrix& x) {
    const std::size_t g = core.group_size;
    Matrix out(core.group_count(), x.cols());
    for (std::size_t p = 0; p < core.group_count(); ++p) {
        for (std::size_t t = 0; t < g; ++t) {
            for (std::size_t c = 0; c < x.cols(); ++c) {
                out(p, c) += core.phi(p, t) * x(p * g + t, c);
            }
        }
    }
    return out;
}

std::vector<CheckResult> check_linearity(const VerifyOptions& o) {
    std::vector<CheckResult> out;
    for (PoolingMode mode : kModes) {
        Worst w;
        bool simplex = true;
        for (std::size_t n = 0; n < o.seeds; ++n) {
            const Head h = random_head(30, 8, o.seed + 30 + n);
            const AttentionConfig c = head_config(o, 8, 4, 8, mode, o.attention.rope_enabled);
            const HeadTrace tr = attention_head_forward(h.q, h.k, h.v, c, AttentionVariant::cca, false);
            w.see(max_abs_diff(tr.core.core_k, phi_times(tr.core, h.k)));
            w.see(max_abs_diff(tr.core.core_v, phi_times(tr.core, h.v)));
            for (std::size_t p = 0; p < tr.core.group_count(); ++p) {
                double sum = 0.0;
                for (double x : tr.core.phi.row(p)) {
                    sum += x;
                    simplex = simplex && x >= 0.0 && (mode != PoolingMode::weighted || x > 0.0);
                }
                simplex = simplex && std::fabs(sum - 1.0) <= 1e-12;
            }
        }
        out.push_back({"linearity_identity[" + std::string(to_string(mode)) + "]", w.within(1e-12) && simplex,
                       "max err " + sci(w.value) + (simplex ? "" : ", phi row off the simplex")});
    }
    return out;
}

std::vector<CheckResult> check_expansion(const VerifyOptions& o) {
    std::vector<CheckResult> out;
    const std::size_t g = o.attention.group_size;
    const std::size_t s = o.attention.local_window;
    const std::size_t length = std::min<std::size_t>(3 * (g + s), 256);
    for (PoolingMode mode : kModes) {
        Worst rows, recon;
        bool reach_ok = true;
        std::size_t structural = 0, underflow = 0;
        for (std::size_t n = 0; n < o.seeds; ++n) {
            const Head h = random_head(length, 8, o.seed + 40 + n);
            const AttentionConfig c = head_config(o, 8, g, s, mode, o.attention.rope_enabled);
            const HeadTrace tr = attention_head_forward(h.q, h.k, h.v, c, AttentionVariant::cca, false);
            CoreTokenSet encoded = tr.core;
            encoded.core_k = tr.core_k_encoded;
            const ExpandedWeights a = expand_weights(tr.q, tr.k, h.v, encoded, c);
            rows.see(max_row_sum_error(a));
            recon.see(max_abs_diff(reconstruct_output(a, h.v), tr.output));
            const ReachabilityReport r = reachability_report(a);
            reach_ok = reach_ok && r.ok;
            structural += r.structural.size();
            underflow += r.underflow.size();
        }
        const std::string tag = "[" + std::string(to_string(mode)) + "]";
        out.push_back({"expansion_row_sums" + tag, rows.within(1e-12), "max |sum-1| " + sci(rows.value)});
        out.push_back({"expansion_reconstruction" + tag, recon.within(1e-10), "max err " + sci(recon.value)});
        if (mode == PoolingMode::max) {
            // One-hot pooling leaves unselected group members unreachable; the report must say so.
            const bool expect_gaps = length / g > 0 && length > s + g;
            const bool ok = expect_gaps ? (!reach_ok && structural > 0 && underflow == 0) : reach_ok;
            out.push_back({"reachability_reports_max_gaps", ok,
                           std::to_string(structural) + " structural zeros, " + std::to_string(underflow) +
                               " underflow"});
        } else {
            out.push_back({"reachability" + tag, reach_ok,
                           reach_ok ? "all t <= i positive" : std::to_string(structural + underflow) + " zeros"});
        }
    }
    return out;
}

CheckResult check_cache_stream(const VerifyOptions& o) {
    const std::size_t g = o.attention.group_size;
    const std::size_t s = o.attention.local_window;
    AttentionConfig c = o.attention;
    c.n_heads = 2;
    c.head_dim = 8;
    Worst w;
    std::vector<std::size_t> lengths{1, g, g + 1, s, s + g, 3 * (s + g)};
    if (g > 1) {
        lengths.push_back(g - 1);
    }
    for (std::size_t n = 0; n < std::min<std::size_t>(o.seeds, 2); ++n) {
        for (std::size_t length : lengths) {
            const Matrix q = seeded_init(length, c.inner_dim(), o.seed + 50 + n, 1.0);
            const Matrix k = seeded_init(length, c.inner_dim(), o.seed + 60 + n, 1.0);
            const Matrix v = seeded_init(length, c.inner_dim(), o.seed + 70 + n, 1.0);
            DecodeCache batch(c);
            const Matrix prefilled = batch.prefill(q, k, v);
            DecodeCache stream(c);
            for (std::size_t t = 0; t < length; ++t) {
                const std::vector<double> row = stream.append(q.row(t), k.row(t), v.row(t));
                w.see(max_abs_diff(Matrix(1, row.size(), row), prefilled.row_block(t, 1)));
            }
            for (std::size_t h = 0; h < c.n_heads; ++h) {
                w.see(max_abs_diff(batch.core_keys(h), stream.core_keys(h)));
                w.see(max_abs_diff(batch.ring_keys(h), stream.ring_keys(h)));
            }
        }
    }
    return {"cache_stream_equals_prefill", w.within(1e-10), "max err " + sci(w.value)};
}

CheckResult check_cache_accounting(const VerifyOptions& o) {
    AttentionConfig c = o.attention;
    c.n_heads = 2;
    c.head_dim = 8;
    BenchConfig bench;
    bench.attention = c;
    bool ok = true;
    std::string detail = "counts and bytes exact";
    for (std::size_t length : {0, 1, 99, 100, 128}) {
        DecodeCache cache(c);
        if (length > 0) {
            const Matrix x = seeded_init(length, c.inner_dim(), o.seed + 80, 1.0);
            cache.prefill(x, x, x);
        }
        const CacheStats st = cache.stats();
        const bool row_ok = st.core_entries == length / c.group_size &&
                            st.raw_entries == std::min(length, c.local_window + c.group_size) &&
                            st.pending_entries == length % c.group_size &&
                            st.kv_bytes == kv_bytes(BenchVariant::cca, length, bench);
        if (!row_ok && ok) {
            detail = "mismatch at L=" + std::to_string(length);
        }
        ok = ok && row_ok;
    }
    return {"cache_accounting", ok, detail};
}

CheckResult check_flop_ledger(const VerifyOptions& o) {
    bool ok = true;
    std::string detail = "instrumented == ledger";
    for (PoolingMode mode : kModes) {
        for (std::size_t length : {7, 33, 129}) {
            AttentionConfig c = head_config(o, 8, 4, 8, mode, false);
            c.n_heads = 2;
            BenchConfig bench;
            bench.attention = c;
            const Head h = random_head(length, 8, o.seed + 90);
            std::uint64_t counted = 0;
            {
                kernels::FlopCounter counter;
                for (std::size_t head = 0; head < c.n_heads; ++head) {
                    attention_head_forward(h.q, h.k, h.v, c, AttentionVariant::cca, false);
                }
                counted = counter.flops();
            }
            const std::uint64_t ledger = flops_attention(BenchVariant::cca, length, bench, BenchMode::prefill);
            if (counted != ledger && ok) {
                detail = "L=" + std::to_string(length) + " " + std::string(to_string(mode)) + ": counted " +
                         std::to_string(counted) + ", ledger " + std::to_string(ledger);
                ok = false;
            }
        }
    }
    return {"flop_ledger_matches_execution", ok, detail};
}

ModelConfig tiny_model(const VerifyOptions& o, PoolingMode mode) {
    ModelConfig m;
    m.d_model = 8;
    m.n_heads = 2;
    m.head_dim = 4;
    m.mlp_hidden = 16;
    m.n_layers = 2;
    m.attention = o.attention;
    m.attention.group_size = 3;
    m.attention.local_window = 2;
    m.attention.pooling = mode;
    m.init_scale = 0.3;
    m.seed = o.seed;
    return m;
}

std::vector<CheckResult> check_gradients(const VerifyOptions& o) {
    std::vector<CheckResult> out;
    const std::vector<std::uint32_t> ids{3, 17, 200, 3, 45, 99, 17, 250, 1, 8, 45, 3};
    for (PoolingMode mode : kModes) {
        const ModelParams params = model_init(tiny_model(o, mode));
        const LossAndGrad lg = loss_and_grad(params, ids);
        const std::vector<double> flat = params.flatten();
        const std::vector<double> grad = lg.grad.flatten();
        std::vector<std::size_t> offsets;
        std::size_t off = 0;
        for (const Parameter& p : params.tensors) {
            offsets.push_back(off);
            off += p.value.size();
        }
        Xorshift64Star rng(o.seed + 7);
        std::vector<std::size_t> coords;
        for (std::size_t t = 0; t < params.tensors.size(); ++t) {
            const Matrix& m = params.tensors[t].value;
            for (int draw = 0; draw < 4; ++draw) {
                const std::size_t row = t == params.embedding() ? ids[rng.below(ids.size())] : rng.below(m.rows());
                coords.push_back(offsets[t] + row * m.cols() + rng.below(m.cols()));
            }
        }
        const auto loss = [&](std::span<const double> x) {
            ModelParams q = params;
            q.assign_flat(x);
            return loss_only(q, ids);
        };
        const std::vector<double> numeric = finite_diff_grad(loss, flat, 1e-5, coords);
        Worst w;
        for (std::size_t n = 0; n < coords.size(); ++n) {
            w.see(gradient_rel_error(grad[coords[n]], numeric[n]));
        }
        out.push_back({"gradient_check[" + std::string(to_string(mode)) + "]", w.within(1e-5),
                       std::to_string(coords.size()) + " coords, max rel err " + sci(w.value)});
    }
    return out;
}

CheckResult check_partial_freeze(const VerifyOptions& o) {
    const ModelParams params = model_init(tiny_model(o, PoolingMode::weighted));
    const std::vector<std::uint32_t> ids{5, 9, 200, 5, 31, 77, 9, 1};
    const LossAndGrad lg = loss_and_grad(params, ids, TrainMode::partial);
    bool frozen_zero = true;
    bool trained_nonzero = false;
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        const bool trainable = is_trainable(params.tensors[t].cls, TrainMode::partial);
        for (double g : lg.grad.tensors[t].values()) {
            frozen_zero = frozen_zero && (trainable || g == 0.0);
            trained_nonzero = trained_nonzero || (trainable && g != 0.0);
        }
    }
    return {"partial_finetune_frozen_grads_zero", frozen_zero && trained_nonzero,
            frozen_zero ? "frozen tensors exactly zero" : "frozen tensor has a gradient"};
}

CheckResult check_sink_window(const VerifyOptions& o) {
    const Head h = random_head(16, 8, o.seed + 110);
    const ReachabilityReport sink = reachability_report(sink_window_weights(h.q, h.k, 2, 2));
    const AttentionConfig c = head_config(o, 8, 4, 2, PoolingMode::weighted, false);
    const HeadTrace tr = attention_head_forward(h.q, h.k, h.v, c, AttentionVariant::cca, false);
    CoreTokenSet encoded = tr.core;
    encoded.core_k = tr.core_k_encoded;
    const ReachabilityReport cca = reachability_report(expand_weights(tr.q, tr.k, h.v, encoded, c));
    return {"sink_window_unreachable_cca_reachable", !sink.ok && cca.ok,
            "sink-window gaps " + std::to_string(sink.violations.size()) + ", cca gaps " +
                std::to_string(cca.violations.size())};
}

CheckResult check_generation(const VerifyOptions& o) {
    ModelConfig m = tiny_model(o, o.attention.pooling);
    m.attention.group_size = 2;
    m.attention.local_window = 3;
    const ModelParams params = model_init(m);
    const std::vector<std::uint32_t> prompt{72, 101, 108, 108, 111};
    const auto cached = generate(params, prompt, 12);
    const auto uncached = generate_uncached(params, prompt, 12);
    return {"generate_cached_equals_uncached", cached == uncached,
            cached == uncached ? "token-for-token" : "decoded sequences differ"};
}

}  // namespace

std::vector<CheckResult> run_verify(const VerifyOptions& options) {
    options.attention.validate();
    std::vector<std::function<std::vector<CheckResult>()>> suite{
        [&] { return std::vector<CheckResult>{check_softmax(options)}; },
        [&] { return std::vector<CheckResult>{check_rope(options)}; },
        [&] { return std::vector<CheckResult>{check_kernels(options)}; },
        [&] { return std::vector<CheckResult>{check_oracle_g1(options)}; },
        [&] { return std::vector<CheckResult>{check_short_context(options)}; },
        [&] { return std::vector<CheckResult>{check_causality(options)}; },
        [&] { return check_linearity(options); },
        [&] { return check_expansion(options); },
        [&] { return std::vector<CheckResult>{check_cache_stream(options)}; },
        [&] { return std::vector<CheckResult>{check_cache_accounting(options)}; },
        [&] { return std::vector<CheckResult>{check_flop_ledger(options)}; },
        [&] { return check_gradients(options); },
        [&] { return std::vector<CheckResult>{check_partial_freeze(options)}; },
        [&] { return std::vector<CheckResult>{check_sink_window(options)}; },
        [&] { return std::vector<CheckResult>{check_generation(options)}; },
    };
    std::vector<CheckResult> results;
    for (const auto& check : suite) {
        const auto start = std::chrono::steady_clock::now();
        std::vector<CheckResult> part;
        try {
            part = check();
        } catch (const std::exception& e) {
            part = {{"<check raised>", false, e.what()}};
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() /
            static_cast<double>(part.size());
        for (CheckResult& r : part) {
            r.seconds = elapsed;
            results.push_back(std::move(r));
        }
    }
    return results;
}

void print_checks(std::ostream& out, const std::vector<CheckResult>& checks) {
    std::size_t width = 5;
    for (const CheckResult& c : checks) {
        width = std::max(width, c.name.size());
    }
    std::size_t failed = 0;
    out << std::left << std::setw(static_cast<int>(width)) << "check" << "  result  detail\n";
    for (const CheckResult& c : checks) {
        out << std::left << std::setw(static_cast<int>(width)) << c.name << "  " << (c.passed ? "PASS  " : "FAIL  ")
            << "  " << c.detail << '\n';
        failed += c.passed ? 0 : 1;
    }
    out << checks.size() - failed << "/" << checks.size() << " checks passed\n";
}

}  // namespace cca
