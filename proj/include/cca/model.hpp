// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Toy byte-level decoder: pre-norm blocks of CCA attention + GELU MLP,
// trained with plain SGD. Gradients are derived by hand, including the path
// through the pooling softmax and the rotary encodings.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cca/attention.hpp"
#include "cca/matrix.hpp"

namespace cca {

struct ModelConfig {
    std::size_t vocab_size = 256;
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t head_dim = 16;
    std::size_t mlp_hidden = 128;
    // group_size, local_window, pooling and rope are read from here; heads and
    // head_dim are always taken from the fields above.
    AttentionConfig attention;
    AttentionVariant variant = AttentionVariant::cca;
    double init_scale = 0.02;
    std::uint64_t seed = 0;

    void validate() const;
    AttentionConfig attention_config() const;
};

enum class ParamClass { embedding, attention_qkv, attention_out, mlp, norm, head };

std::string_view to_string(ParamClass cls) noexcept;

enum class TrainMode { full, partial };

std::string_view to_string(TrainMode mode) noexcept;
TrainMode parse_train_mode(std::string_view text);

/// Partial finetuning trains only Wq, Wk and Wv.
bool is_trainable(ParamClass cls, TrainMode mode) noexcept;

struct Parameter {
    std::string name;
    ParamClass cls;
    Matrix value;
};

struct LayerSlots {
    std::size_t attn_norm, wq, wk, wv, wo, mlp_norm, w1, w2;
};

class ModelParams {
public:
    ModelConfig config;
    std::vector<Parameter> tensors;

    std::size_t embedding() const noexcept { return 0; }
    LayerSlots layer(std::size_t index) const noexcept;
    std::size_t final_norm() const noexcept { return 1 + 8 * config.n_layers; }
    std::size_t head() const noexcept { return 2 + 8 * config.n_layers; }

    std::size_t parameter_count() const noexcept;
    std::vector<double> flatten() const;
    void assign_flat(std::span<const double> values);

    bool operator==(const ModelParams& other) const;
};

/// Same layout as ModelParams::tensors.
struct Gradients {
    std::vector<Matrix> tensors;
    std::vector<double> flatten() const;
};

ModelParams model_init(const ModelConfig& config);

Matrix forward_lm(const ModelParams& params, std::span<const std::uint32_t> ids);

struct LossAndGrad {
    double loss = 0.0;
    Gradients grad;
};

/// Mean next-token cross-entropy and its gradient. Frozen tensors get exact zeros.
LossAndGrad loss_and_grad(const ModelParams& params, std::span<const std::uint32_t> ids,
                          TrainMode mode = TrainMode::full);

double loss_only(const ModelParams& params, std::span<const std::uint32_t> ids);

struct TrainOptions {
    std::size_t steps = 200;
    double lr = 0.5;
    TrainMode mode = TrainMode::full;
    std::size_t seq_len = 64;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
};

struct TrainLog {
    // Loss of a fixed evaluation batch before each step, plus one entry after
    // the last step (steps + 1 values).
    std::vector<double> eval_loss;
    // Mean loss of the sampled training batch at each step.
    std::vector<double> train_loss;

    double initial() const { return eval_loss.front(); }
    double final() const { return eval_loss.back(); }
};

/// Plain SGD on random windows of `corpus`. Throws on a non-finite loss, naming the step.
TrainLog train(ModelParams& params, std::span<const std::uint8_t> corpus, const TrainOptions& options);

struct WindowOverride {
    std::optional<std::size_t> group_size;
    std::optional<std::size_t> local_window;
};

/// Greedy decoding through per-layer decode caches built with the (optionally overridden) g and s.
std::vector<std::uint32_t> generate(const ModelParams& params, std::span<const std::uint32_t> prompt,
                                    std::size_t n_new, const WindowOverride& override = {});

/// Reference for generate(): recomputes the whole sequence with forward_lm at every step.
std::vector<std::uint32_t> generate_uncached(const ModelParams& params, std::span<const std::uint32_t> prompt,
                                             std::size_t n_new, const WindowOverride& override = {});

ModelParams with_window(const ModelParams& params, const WindowOverride& override);

std::vector<std::uint32_t> bytes_to_ids(std::string_view text);
std::string ids_to_bytes(std::span<const std::uint32_t> ids);

}  // namespace cca
