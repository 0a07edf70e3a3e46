// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "cca/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cca/kernels.hpp"
#include "cca/kv_cache.hpp"
#include "cca/numerics.hpp"

namespace cca {

void ModelConfig::validate() const {
    if (vocab_size < 1 || d_model < 1 || n_layers < 1 || n_heads < 1 || head_dim < 1 || mlp_hidden < 1) {
        throw Error("model dimensions must all be >= 1");
    }
    if (d_model != n_heads * head_dim) {
        throw Error("d_model (" + std::to_string(d_model) + ") must equal n_heads * head_dim (" +
                    std::to_string(n_heads) + " * " + std::to_string(head_dim) + ")");
    }
    if (!(init_scale > 0.0)) {
        throw Error("init_scale must be positive");
    }
    attention_config().validate();
}

AttentionConfig ModelConfig::attention_config() const {
    AttentionConfig out = attention;
    out.n_heads = n_heads;
    out.head_dim = head_dim;
    return out;
}

std::string_view to_string(ParamClass cls) noexcept {
    switch (cls) {
        case ParamClass::embedding: return "embedding";
        case ParamClass::attention_qkv: return "attention_qkv";
        case ParamClass::attention_out: return "attention_out";
        case ParamClass::mlp: return "mlp";
        case ParamClass::norm: return "norm";
        case ParamClass::head: return "head";
    }
    return "embedding";
}

std::string_view to_string(TrainMode mode) noexcept { return mode == TrainMode::partial ? "partial" : "full"; }

TrainMode parse_train_mode(std::string_view text) {
    if (text == "full") return TrainMode::full;
    if (text == "partial") return TrainMode::partial;
    throw Error("unknown train mode '" + std::string(text) + "' (expected full or partial)");
}

bool is_trainable(ParamClass cls, TrainMode mode) noexcept {
    return mode == TrainMode::full || cls == ParamClass::attention_qkv;
}

LayerSlots ModelParams::layer(std::size_t index) const noexcept {
    const std::size_t b = 1 + 8 * index;
    return LayerSlots{b, b + 1, b + 2, b + 3, b + 4, b + 5, b + 6, b + 7};
}

std::size_t ModelParams::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const Parameter& p : tensors) {
        n += p.value.size();
    }
    return n;
}

std::vector<double> ModelParams::flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const Parameter& p : tensors) {
        out.insert(out.end(), p.value.values().begin(), p.value.values().end());
    }
    return out;
}

void ModelParams::assign_flat(std::span<const double> values) {
    if (values.size() != parameter_count()) {
        throw Error("flat parameter vector has " + std::to_string(values.size()) + " values, model has " +
                    std::to_string(parameter_count()));
    }
    std::size_t offset = 0;
    for (Parameter& p : tensors) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), p.value.size(), p.value.data());
        offset += p.value.size();
    }
}

bool ModelParams::operator==(const ModelParams& other) const {
    if (tensors.size() != other.tensors.size()) {
        return false;
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i].name != other.tensors[i].name || !(tensors[i].value == other.tensors[i].value)) {
            return false;
        }
    }
    return true;
}

std::vector<double> Gradients::flatten() const {
    std::vector<double> out;
    for (const Matrix& m : tensors) {
        out.insert(out.end(), m.values().begin(), m.values().end());
    }
    return out;
}

ModelParams model_init(const ModelConfig& config) {
    config.validate();
    ModelParams params;
    params.config = config;
    const std::size_t d = config.d_model;
    const std::size_t inner = config.n_heads * config.head_dim;
    std::uint64_t stream = 0;
    const auto random = [&](std::size_t r, std::size_t c) {
        ++stream;
        return seeded_init(r, c, config.seed ^ (stream * 0x9E3779B97F4A7C15ULL), config.init_scale);
    };
    params.tensors.push_back({"tok_embedding", ParamClass::embedding, random(config.vocab_size, d)});
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        const std::string prefix = "layers." + std::to_string(l) + ".";
        params.tensors.push_back({prefix + "attn_norm", ParamClass::norm, Matrix(1, d, 1.0)});
        params.tensors.push_back({prefix + "wq", ParamClass::attention_qkv, random(d, inner)});
        params.tensors.push_back({prefix + "wk", ParamClass::attention_qkv, random(d, inner)});
        params.tensors.push_back({prefix + "wv", ParamClass::attention_qkv, random(d, inner)});
        params.tensors.push_back({prefix + "wo", ParamClass::attention_out, random(inner, d)});
        params.tensors.push_back({prefix + "mlp_norm", ParamClass::norm, Matrix(1, d, 1.0)});
        params.tensors.push_back({prefix + "w1", ParamClass::mlp, random(d, config.mlp_hidden)});
        params.tensors.push_back({prefix + "w2", ParamClass::mlp, random(config.mlp_hidden, d)});
    }
    params.tensors.push_back({"final_norm", ParamClass::norm, Matrix(1, d, 1.0)});
    params.tensors.push_back({"lm_head", ParamClass::head, random(d, config.vocab_size)});
    return params;
}

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u))); }

double gelu_grad(double u) {
    const double t = std::tanh(kGeluC * (u + kGeluA * u * u * u));
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * u * u);
}

struct Normed {
    Matrix y;
    std::vector<double> inv_rms;
};

void rms_norm_row(std::span<const double> x, std::span<const double> gain, std::span<double> y, double& inv_rms) {
    double ss = 0.0;
    for (double v : x) {
        ss += v * v;
    }
    inv_rms = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + kNormEps);
    for (std::size_t c = 0; c < x.size(); ++c) {
        y[c] = x[c] * inv_rms * gain[c];
    }
}

Normed rms_norm(const Matrix& x, const Matrix& gain) {
    Normed out{Matrix(x.rows(), x.cols()), std::vector<double>(x.rows())};
    for (std::size_t r = 0; r < x.rows(); ++r) {
        rms_norm_row(x.row(r), gain.row(0), out.y.row(r), out.inv_rms[r]);
    }
    return out;
}

// dx += d(norm)/dx^T dy ; dgain += sum_rows dy * x * inv_rms
void rms_norm_backward(const Matrix& x, const Matrix& gain, const std::vector<double>& inv_rms, const Matrix& dy,
                       Matrix& dx, Matrix& dgain) {
    const std::size_t d = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double ir = inv_rms[r];
        double proj = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double gy = gain(0, c) * dy(r, c);
            proj += gy * x(r, c);
            dgain(0, c) += dy(r, c) * x(r, c) * ir;
        }
        const double coeff = proj * ir * ir * ir / static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c) {
            dx(r, c) += gain(0, c) * dy(r, c) * ir - x(r, c) * coeff;
        }
    }
}

struct LayerTrace {
    Matrix x_in;
    Normed n1;
    Matrix q, k, v;
    std::vector<HeadTrace> heads;
    Matrix attn;
    Matrix x_mid;
    Normed n2;
    Matrix u, a;
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
    Matrix x_final;
    Normed nf;
    Matrix logits;
};

void check_ids(const ModelConfig& config, std::span<const std::uint32_t> ids) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= config.vocab_size) {
            throw Error("token id " + std::to_string(ids[i]) + " at position " + std::to_string(i + 1) +
                        " is outside the vocabulary of " + std::to_string(config.vocab_size));
        }
    }
}

ForwardTrace run_forward(const ModelParams& params, std::span<const std::uint32_t> ids, bool keep_weights) {
    const ModelConfig& cfg = params.config;
    if (ids.empty()) {
        throw Error("forward needs at least one token");
    }
    check_ids(cfg, ids);
    const AttentionConfig att = cfg.attention_config();
    const std::size_t length = ids.size();
    const std::size_t dh = cfg.head_dim;

    ForwardTrace tr;
    Matrix x(length, cfg.d_model);
    const Matrix& emb = params.tensors[params.embedding()].value;
    for (std::size_t i = 0; i < length; ++i) {
        std::copy_n(emb.row(ids[i]).data(), cfg.d_model, x.row(i).data());
    }
    tr.layers.resize(cfg.n_layers);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const LayerSlots s = params.layer(l);
        LayerTrace& lt = tr.layers[l];
        lt.x_in = x;
        lt.n1 = rms_norm(x, params.tensors[s.attn_norm].value);
        lt.q = matmul(lt.n1.y, params.tensors[s.wq].value);
        lt.k = matmul(lt.n1.y, params.tensors[s.wk].value);
        lt.v = matmul(lt.n1.y, params.tensors[s.wv].value);
        lt.attn = Matrix(length, cfg.n_heads * dh);
        lt.heads.reserve(cfg.n_heads);
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            lt.heads.push_back(attention_head_forward(lt.q.col_block(h * dh, dh), lt.k.col_block(h * dh, dh),
                                                      lt.v.col_block(h * dh, dh), att, cfg.variant, keep_weights));
            lt.attn.set_col_block(h * dh, lt.heads.back().output);
        }
        x = lt.x_in;
        add_inplace(x, matmul(lt.attn, params.tensors[s.wo].value));
        lt.x_mid = x;
        lt.n2 = rms_norm(x, params.tensors[s.mlp_norm].value);
        lt.u = matmul(lt.n2.y, params.tensors[s.w1].value);
        lt.a = lt.u;
        for (double& e : lt.a.values()) {
            e = gelu(e);
        }
        add_inplace(x, matmul(lt.a, params.tensors[s.w2].value));
    }
    tr.x_final = x;
    tr.nf = rms_norm(x, params.tensors[params.final_norm()].value);
    tr.logits = matmul(tr.nf.y, params.tensors[params.head()].value);
    return tr;
}

// Gradients of one head's attention output with respect to its raw (pre-RoPE) q, k and v.
void head_backward(const HeadTrace& tr, const Matrix& k_raw, const Matrix& v, const Matrix& dout,
                   const AttentionConfig& cfg, Matrix& dq_raw, Matrix& dk_raw, Matrix& dv) {
    const std::size_t length = v.rows();
    const std::size_t dh = v.cols();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const RopeParams rope = cfg.rope();
    const std::size_t m = tr.core.group_count();

    Matrix dq(length, dh);
    Matrix dk(length, dh);  // w.r.t. encoded keys
    Matrix dck(m, dh);      // w.r.t. encoded core keys
    Matrix dcv(m, dh);
    dk_raw = Matrix(length, dh);
    dv = Matrix(length, dh);

    std::vector<double> dz;
    for (std::size_t r = 0; r < length; ++r) {
        const IndexPlan& plan = tr.plans[r];
        const std::vector<double>& w = tr.weights[r];
        const std::size_t j = plan.global_end;
        dz.assign(w.size(), 0.0);
        double mean = 0.0;
        for (std::size_t c = 0; c < w.size(); ++c) {
            const std::span<const double> value =
                c < j ? tr.core.core_v.row(c) : v.row(plan.local_start - 1 + (c - j));
            dz[c] = kernels::dot(dout.row(r), value);
            mean += w[c] * dz[c];
        }
        for (std::size_t c = 0; c < w.size(); ++c) {
            dz[c] = w[c] * (dz[c] - mean) * scale;
        }
        for (std::size_t c = 0; c < w.size(); ++c) {
            if (c < j) {
                kernels::axpy(w[c], dout.row(r), dcv.row(c));
                kernels::axpy(dz[c], tr.core_k_encoded.row(c), dq.row(r));
                kernels::axpy(dz[c], tr.q.row(r), dck.row(c));
            } else {
                const std::size_t t = plan.local_start - 1 + (c - j);
                kernels::axpy(w[c], dout.row(r), dv.row(t));
                kernels::axpy(dz[c], tr.k.row(t), dq.row(r));
                kernels::axpy(dz[c], tr.q.row(r), dk.row(t));
            }
        }
    }

    if (tr.variant == AttentionVariant::cca) {
        const std::size_t g = tr.core.group_size;
        std::vector<double> dphi(g);
        for (std::size_t p = 0; p < m; ++p) {
            std::span<double> dck_pre = dck.row(p);
            apply_rope_inplace(dck_pre, group_middle_token(p + 1, g) - 1, rope, true);
            const std::size_t base = p * g;
            const std::span<const double> phi = tr.core.phi.row(p);
            double mean = 0.0;
            for (std::size_t t = 0; t < g; ++t) {
                dphi[t] = kernels::dot(dck_pre, k_raw.row(base + t)) + kernels::dot(dcv.row(p), v.row(base + t));
                mean += phi[t] * dphi[t];
                kernels::axpy(phi[t], dck_pre, dk_raw.row(base + t));
                kernels::axpy(phi[t], dcv.row(p), dv.row(base + t));
            }
            if (cfg.pooling == PoolingMode::weighted) {
                const std::size_t last = base + g - 1;
                for (std::size_t t = 0; t < g; ++t) {
                    const double ds = phi[t] * (dphi[t] - mean) * scale;
                    kernels::axpy(ds, tr.k.row(base + t), dq.row(last));
                    kernels::axpy(ds, tr.q.row(last), dk.row(base + t));
                }
            }
        }
    }

    dq_raw = std::move(dq);
    for (std::size_t r = 0; r < length; ++r) {
        apply_rope_inplace(dq_raw.row(r), r, rope, true);
        apply_rope_inplace(dk.row(r), r, rope, true);
    }
    add_inplace(dk_raw, dk);
}

double cross_entropy(const Matrix& logits, std::span<const std::uint32_t> ids, Matrix* dlogits) {
    const std::size_t length = ids.size();
    const double inv = 1.0 / static_cast<double>(length - 1);
    double total = 0.0;
    if (dlogits != nullptr) {
        *dlogits = Matrix(logits.rows(), logits.cols());
    }
    std::vector<double> probs;
    for (std::size_t i = 0; i + 1 < length; ++i) {
        probs.assign(logits.row(i).begin(), logits.row(i).end());
        const double peak = *std::max_element(probs.begin(), probs.end());
        double sum = 0.0;
        for (double z : probs) {
            sum += std::exp(z - peak);
        }
        const std::uint32_t target = ids[i + 1];
        total += (std::log(sum) + peak) - logits(i, target);
        if (dlogits != nullptr) {
            stable_softmax_inplace(probs);
            probs[target] -= 1.0;
            for (std::size_t c = 0; c < probs.size(); ++c) {
                (*dlogits)(i, c) = probs[c] * inv;
            }
        }
    }
    return total * inv;
}

}  // namespace

Matrix forward_lm(const ModelParams& params, std::span<const std::uint32_t> ids) {
    return run_forward(params, ids, false).logits;
}

double loss_only(const ModelParams& params, std::span<const std::uint32_t> ids) {
    if (ids.size() < 2) {
        throw Error("loss needs at least 2 tokens, got " + std::to_string(ids.size()));
    }
    return cross_entropy(forward_lm(params, ids), ids, nullptr);
}

LossAndGrad loss_and_grad(const ModelParams& params, std::span<const std::uint32_t> ids, TrainMode mode) {
    if (ids.size() < 2) {
        throw Error("loss needs at least 2 tokens, got " + std::to_string(ids.size()));
    }
    const ModelConfig& cfg = params.config;
    const AttentionConfig att = cfg.attention_config();
    const std::size_t dh = cfg.head_dim;
    const ForwardTrace tr = run_forward(params, ids, true);

    LossAndGrad out;
    out.grad.tensors.reserve(params.tensors.size());
    for (const Parameter& p : params.tensors) {
        out.grad.tensors.emplace_back(p.value.rows(), p.value.cols());
    }
    auto& G = out.grad.tensors;
    const auto& P = params.tensors;

    Matrix dlogits;
    out.loss = cross_entropy(tr.logits, ids, &dlogits);

    G[params.head()] = matmul_tn(tr.nf.y, dlogits);
    const Matrix dnf = matmul_nt(dlogits, P[params.head()].value);
    Matrix dx(tr.x_final.rows(), tr.x_final.cols());
    rms_norm_backward(tr.x_final, P[params.final_norm()].value, tr.nf.inv_rms, dnf, dx, G[params.final_norm()]);

    for (std::size_t l = cfg.n_layers; l-- > 0;) {
        const LayerSlots s = params.layer(l);
        const LayerTrace& lt = tr.layers[l];

        // x_out = x_mid + gelu(norm(x_mid) W1) W2
        add_inplace(G[s.w2], matmul_tn(lt.a, dx));
        Matrix du = matmul_nt(dx, P[s.w2].value);
        for (std::size_t i = 0; i < du.size(); ++i) {
            du.data()[i] *= gelu_grad(lt.u.data()[i]);
        }
        add_inplace(G[s.w1], matmul_tn(lt.n2.y, du));
        const Matrix dn2 = matmul_nt(du, P[s.w1].value);
        Matrix dx_mid = dx;
        rms_norm_backward(lt.x_mid, P[s.mlp_norm].value, lt.n2.inv_rms, dn2, dx_mid, G[s.mlp_norm]);

        // x_mid = x_in + attn(norm(x_in)) Wo
        add_inplace(G[s.wo], matmul_tn(lt.attn, dx_mid));
        const Matrix dattn = matmul_nt(dx_mid, P[s.wo].value);
        Matrix dq(lt.q.rows(), lt.q.cols());
        Matrix dk(lt.k.rows(), lt.k.cols());
        Matrix dv(lt.v.rows(), lt.v.cols());
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            Matrix dqh, dkh, dvh;
            head_backward(lt.heads[h], lt.k.col_block(h * dh, dh), lt.v.col_block(h * dh, dh),
                          dattn.col_block(h * dh, dh), att, dqh, dkh, dvh);
            dq.set_col_block(h * dh, dqh);
            dk.set_col_block(h * dh, dkh);
            dv.set_col_block(h * dh, dvh);
        }
        add_inplace(G[s.wq], matmul_tn(lt.n1.y, dq));
        add_inplace(G[s.wk], matmul_tn(lt.n1.y, dk));
        add_inplace(G[s.wv], matmul_tn(lt.n1.y, dv));
        Matrix dn1 = matmul_nt(dq, P[s.wq].value);
        add_inplace(dn1, matmul_nt(dk, P[s.wk].value));
        add_inplace(dn1, matmul_nt(dv, P[s.wv].value));
        dx = std::move(dx_mid);
        rms_norm_backward(lt.x_in, P[s.attn_norm].value, lt.n1.inv_rms, dn1, dx, G[s.attn_norm]);
    }

    Matrix& demb = G[params.embedding()];
    for (std::size_t i = 0; i < ids.size(); ++i) {
        kernels::axpy(1.0, dx.row(i), demb.row(ids[i]));
    }

    for (std::size_t t = 0; t < P.size(); ++t) {
        if (!is_trainable(P[t].cls, mode)) {
            G[t].fill(0.0);
        }
    }
    return out;
}

std::vector<std::uint32_t> bytes_to_ids(std::string_view text) {
    std::vector<std::uint32_t> out;
    out.reserve(text.size());
    for (char c : text) {
        out.push_back(static_cast<unsigned char>(c));
    }
    return out;
}

std::string ids_to_bytes(std::span<const std::uint32_t> ids) {
    std::string out;
    out.reserve(ids.size());
    for (std::uint32_t id : ids) {
        out.push_back(static_cast<char>(static_cast<unsigned char>(id & 0xFFu)));
    }
    return out;
}

namespace {

std::vector<std::uint32_t> sample_window(std::span<const std::uint8_t> corpus, std::size_t length,
                                         Xorshift64Star& rng) {
    const std::size_t take = std::min(length, corpus.size());
    const std::size_t offset = corpus.size() > take ? rng.below(corpus.size() - take + 1) : 0;
    std::vector<std::uint32_t> ids(take);
    for (std::size_t i = 0; i < take; ++i) {
        ids[i] = corpus[offset + i];
    }
    return ids;
}

}  // namespace

TrainLog train(ModelParams& params, std::span<const std::uint8_t> corpus, const TrainOptions& options) {
    if (corpus.size() < 2) {
        throw Error("training corpus needs at least 2 bytes");
    }
    if (options.steps < 1 || options.batch_size < 1 || options.seq_len < 2) {
        throw Error("train needs steps >= 1, batch_size >= 1 and seq_len >= 2");
    }
    params.config.validate();

    Xorshift64Star eval_rng(options.seed ^ 0xE7A1B47C3D2F0001ULL);
    std::vector<std::vector<std::uint32_t>> eval_batch;
    for (std::size_t b = 0; b < options.batch_size; ++b) {
        eval_batch.push_back(sample_window(corpus, options.seq_len, eval_rng));
    }
    const auto eval_loss = [&]() {
        double total = 0.0;
        for (const auto& ids : eval_batch) {
            total += loss_only(params, ids);
        }
        return total / static_cast<double>(eval_batch.size());
    };
    // Overflow inside the forward pass surfaces as an Error from the softmax; attach the step.
    const auto at_step = [](std::size_t step, auto&& fn) {
        try {
            return fn();
        } catch (const Error& e) {
            throw Error("non-finite loss at step " + std::to_string(step) + " (" + e.what() + ")");
        }
    };

    Xorshift64Star rng(options.seed);
    TrainLog log;
    for (std::size_t step = 0; step < options.steps; ++step) {
        const double before = at_step(step, eval_loss);
        if (!std::isfinite(before)) {
            throw Error("non-finite loss at step " + std::to_string(step));
        }
        log.eval_loss.push_back(before);

        std::vector<Matrix> grad;
        double batch_loss = 0.0;
        for (std::size_t b = 0; b < options.batch_size; ++b) {
            const std::vector<std::uint32_t> ids = sample_window(corpus, options.seq_len, rng);
            LossAndGrad lg = at_step(step, [&] { return loss_and_grad(params, ids, options.mode); });
            if (!std::isfinite(lg.loss)) {
                throw Error("non-finite loss at step " + std::to_string(step));
            }
            batch_loss += lg.loss;
            if (grad.empty()) {
                grad = std::move(lg.grad.tensors);
            } else {
                for (std::size_t t = 0; t < grad.size(); ++t) {
                    add_inplace(grad[t], lg.grad.tensors[t]);
                }
            }
        }
        log.train_loss.push_back(batch_loss / static_cast<double>(options.batch_size));
        const double step_size = options.lr / static_cast<double>(options.batch_size);
        for (std::size_t t = 0; t < grad.size(); ++t) {
            if (is_trainable(params.tensors[t].cls, options.mode)) {
                kernels::axpy(-step_size, grad[t].values(), params.tensors[t].value.values());
            }
        }
    }
    const double last = at_step(options.steps, eval_loss);
    if (!std::isfinite(last)) {
        throw Error("non-finite loss at step " + std::to_string(options.steps));
    }
    log.eval_loss.push_back(last);
    return log;
}

ModelParams with_window(const ModelParams& params, const WindowOverride& override) {
    ModelParams out = params;
    if (override.group_size) {
        out.config.attention.group_size = *override.group_size;
    }
    if (override.local_window) {
        out.config.attention.local_window = *override.local_window;
    }
    out.config.validate();
    return out;
}

namespace {

std::uint32_t argmax(std::span<const double> logits) {
    return static_cast<std::uint32_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

// Runs one token through every layer using the decode caches; returns its logits.
std::vector<double> decode_token(const ModelParams& params, std::vector<DecodeCache>& caches, std::uint32_t id) {
    const ModelConfig& cfg = params.config;
    const std::size_t d = cfg.d_model;
    Matrix x(1, d);
    std::copy_n(params.tensors[params.embedding()].value.row(id).data(), d, x.data());
    Matrix h(1, d);
    double inv_rms = 0.0;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const LayerSlots s = params.layer(l);
        rms_norm_row(x.row(0), params.tensors[s.attn_norm].value.row(0), h.row(0), inv_rms);
        const Matrix q = matmul(h, params.tensors[s.wq].value);
        const Matrix k = matmul(h, params.tensors[s.wk].value);
        const Matrix v = matmul(h, params.tensors[s.wv].value);
        const std::vector<double> attn = caches[l].append(q.row(0), k.row(0), v.row(0));
        add_inplace(x, matmul(Matrix(1, attn.size(), attn), params.tensors[s.wo].value));
        rms_norm_row(x.row(0), params.tensors[s.mlp_norm].value.row(0), h.row(0), inv_rms);
        Matrix u = matmul(h, params.tensors[s.w1].value);
        for (double& e : u.values()) {
            e = gelu(e);
        }
        add_inplace(x, matmul(u, params.tensors[s.w2].value));
    }
    rms_norm_row(x.row(0), params.tensors[params.final_norm()].value.row(0), h.row(0), inv_rms);
    const Matrix logits = matmul(h, params.tensors[params.head()].value);
    return {logits.values().begin(), logits.values().end()};
}

// Batch pass over the prompt that fills every layer's cache through prefill().
std::vector<double> prefill_prompt(const ModelParams& params, std::vector<DecodeCache>& caches,
                                   std::span<const std::uint32_t> prompt) {
    const ModelConfig& cfg = params.config;
    const std::size_t length = prompt.size();
    Matrix x(length, cfg.d_model);
    for (std::size_t i = 0; i < length; ++i) {
        std::copy_n(params.tensors[params.embedding()].value.row(prompt[i]).data(), cfg.d_model, x.row(i).data());
    }
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const LayerSlots s = params.layer(l);
        const Normed n1 = rms_norm(x, params.tensors[s.attn_norm].value);
        const Matrix attn = caches[l].prefill(matmul(n1.y, params.tensors[s.wq].value),
                                              matmul(n1.y, params.tensors[s.wk].value),
                                              matmul(n1.y, params.tensors[s.wv].value));
        add_inplace(x, matmul(attn, params.tensors[s.wo].value));
        const Normed n2 = rms_norm(x, params.tensors[s.mlp_norm].value);
        Matrix u = matmul(n2.y, params.tensors[s.w1].value);
        for (double& e : u.values()) {
            e = gelu(e);
        }
        add_inplace(x, matmul(u, params.tensors[s.w2].value));
    }
    const Matrix last = x.row_block(length - 1, 1);
    const Normed nf = rms_norm(last, params.tensors[params.final_norm()].value);
    const Matrix logits = matmul(nf.y, params.tensors[params.head()].value);
    return {logits.values().begin(), logits.values().end()};
}

}  // namespace

std::vector<std::uint32_t> generate(const ModelParams& params, std::span<const std::uint32_t> prompt,
                                    std::size_t n_new, const WindowOverride& override) {
    if (prompt.empty()) {
        throw Error("generate needs a non-empty prompt");
    }
    std::vector<std::uint32_t> out(prompt.begin(), prompt.end());
    if (n_new == 0) {
        return out;
    }
    const ModelParams run = with_window(params, override);
    if (run.config.variant != AttentionVariant::cca) {
        throw Error("cached generation needs the cca attention variant");
    }
    check_ids(run.config, prompt);
    std::vector<DecodeCache> caches(run.config.n_layers, DecodeCache(run.config.attention_config()));
    std::vector<double> logits = prefill_prompt(run, caches, prompt);
    for (std::size_t step = 0; step < n_new; ++step) {
        const std::uint32_t next = argmax(logits);
        out.push_back(next);
        if (step + 1 < n_new) {
            logits = decode_token(run, caches, next);
        }
    }
    return out;
}

std::vector<std::uint32_t> generate_uncached(const ModelParams& params, std::span<const std::uint32_t> prompt,
                                             std::size_t n_new, const WindowOverride& override) {
    if (prompt.empty()) {
        throw Error("generate needs a non-empty prompt");
    }
    const ModelParams run = with_window(params, override);
    std::vector<std::uint32_t> out(prompt.begin(), prompt.end());
    for (std::size_t step = 0; step < n_new; ++step) {
        const Matrix logits = forward_lm(run, out);
        out.push_back(argmax(logits.row(logits.rows() - 1)));
    }
    return out;
}

}  // namespace cca
