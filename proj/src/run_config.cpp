// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "cca/run_config.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>

namespace cca {

namespace {

using nlohmann::json;

void check_keys(const json& obj, std::string_view section, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) {
        throw ConfigError("config section '" + std::string(section) + "' must be an object");
    }
    for (const auto& item : obj.items()) {
        bool known = false;
        for (std::string_view key : allowed) {
            known = known || item.key() == key;
        }
        if (!known) {
            throw ConfigError("unknown key '" + item.key() + "' in config section '" + std::string(section) + "'");
        }
    }
}

std::string where(std::string_view section, std::string_view key) {
    return std::string(section) + "." + std::string(key);
}

void read_count(const json& obj, std::string_view section, const char* key, std::size_t& out) {
    if (!obj.contains(key)) {
        return;
    }
    const json& v = obj.at(key);
    if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0))) {
        throw ConfigError(where(section, key) + " must be a non-negative integer");
    }
    out = v.get<std::size_t>();
}

void read_u64(const json& obj, std::string_view section, const char* key, std::uint64_t& out) {
    if (!obj.contains(key)) {
        return;
    }
    const json& v = obj.at(key);
    if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0))) {
        throw ConfigError(where(section, key) + " must be a non-negative integer");
    }
    out = v.get<std::uint64_t>();
}

void read_real(const json& obj, std::string_view section, const char* key, double& out) {
    if (!obj.contains(key)) {
        return;
    }
    const json& v = obj.at(key);
    if (!v.is_number()) {
        throw ConfigError(where(section, key) + " must be a number");
    }
    out = v.get<double>();
}

void read_bool(const json& obj, std::string_view section, const char* key, bool& out) {
    if (!obj.contains(key)) {
        return;
    }
    const json& v = obj.at(key);
    if (!v.is_boolean()) {
        throw ConfigError(where(section, key) + " must be true or false");
    }
    out = v.get<bool>();
}

void read_string(const json& obj, std::string_view section, const char* key, std::string& out) {
    if (!obj.contains(key)) {
        return;
    }
    const json& v = obj.at(key);
    if (!v.is_string()) {
        throw ConfigError(where(section, key) + " must be a string");
    }
    out = v.get<std::string>();
}

void read_path(const json& obj, std::string_view section, const char* key, const std::filesystem::path& base,
               std::filesystem::path& out) {
    std::string text;
    read_string(obj, section, key, text);
    if (obj.contains(key)) {
        out = text.empty() ? std::filesystem::path() : (base / text).lexically_normal();
    }
}

template <typename Enum, typename Parse>
void read_enum(const json& obj, std::string_view section, const char* key, Enum& out, Parse parse) {
    std::string text;
    read_string(obj, section, key, text);
    if (obj.contains(key)) {
        try {
            out = parse(text);
        } catch (const Error& e) {
            throw ConfigError(where(section, key) + ": " + e.what());
        }
    }
}

void read_optional_count(const json& obj, std::string_view section, const char* key,
                         std::optional<std::size_t>& out) {
    if (!obj.contains(key) || obj.at(key).is_null()) {
        return;
    }
    std::size_t value = 0;
    read_count(obj, section, key, value);
    if (value < 1) {
        throw ConfigError(where(section, key) + " must be >= 1 when present");
    }
    out = value;
}

template <typename T, typename Parse>
std::vector<T> read_list(const json& obj, std::string_view section, const char* key, std::vector<T> fallback,
                         Parse parse) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const json& v = obj.at(key);
    if (!v.is_array() || v.empty()) {
        throw ConfigError(where(section, key) + " must be a non-empty array");
    }
    std::vector<T> out;
    for (const json& item : v) {
        out.push_back(parse(item));
    }
    return out;
}

}  // namespace

void RunConfig::finalize() {
    model.seed = seed;
    train.options.seed = seed;
    bench.seed = seed;
    bench.attention = model.attention_config();
    try {
        model.validate();
        bench.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (train.options.steps < 1 || train.options.batch_size < 1 || train.options.seq_len < 2) {
        throw ConfigError("train needs steps >= 1, batch_size >= 1 and seq_len >= 2");
    }
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
    check_keys(doc, "<root>", {"seed", "model", "attention", "bench", "train", "generate"});
    RunConfig rc;
    read_u64(doc, "<root>", "seed", rc.seed);

    if (doc.contains("model")) {
        const json& m = doc.at("model");
        check_keys(m, "model",
                   {"vocab_size", "d_model", "n_layers", "n_heads", "head_dim", "mlp_hidden", "init_scale", "variant"});
        read_count(m, "model", "vocab_size", rc.model.vocab_size);
        read_count(m, "model", "d_model", rc.model.d_model);
        read_count(m, "model", "n_layers", rc.model.n_layers);
        read_count(m, "model", "n_heads", rc.model.n_heads);
        read_count(m, "model", "head_dim", rc.model.head_dim);
        read_count(m, "model", "mlp_hidden", rc.model.mlp_hidden);
        read_real(m, "model", "init_scale", rc.model.init_scale);
        read_enum(m, "model", "variant", rc.model.variant, parse_attention_variant);
    }
    if (doc.contains("attention")) {
        const json& a = doc.at("attention");
        check_keys(a, "attention", {"group_size", "local_window", "pooling_mode", "rope"});
        AttentionConfig& att = rc.model.attention;
        read_count(a, "attention", "group_size", att.group_size);
        read_count(a, "attention", "local_window", att.local_window);
        read_enum(a, "attention", "pooling_mode", att.pooling, parse_pooling_mode);
        if (a.contains("rope")) {
            const json& r = a.at("rope");
            check_keys(r, "attention.rope", {"enabled", "base"});
            read_bool(r, "attention.rope", "enabled", att.rope_enabled);
            read_real(r, "attention.rope", "base", att.rope_base);
        }
    }
    if (doc.contains("bench")) {
        const json& b = doc.at("bench");
        check_keys(b, "bench",
                   {"lengths", "variants", "modes", "repeats", "group_policy", "group_count", "n_sink", "sink_window"});
        BenchConfig& bc = rc.bench;
        bc.lengths = read_list<std::size_t>(b, "bench", "lengths", bc.lengths, [](const json& v) {
            if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0))) {
                throw ConfigError("bench.lengths entries must be non-negative integers");
            }
            return v.get<std::size_t>();
        });
        const auto text = [](const json& v, const char* key) {
            if (!v.is_string()) {
                throw ConfigError(std::string("bench.") + key + " entries must be strings");
            }
            return v.get<std::string>();
        };
        try {
            bc.variants = read_list<BenchVariant>(b, "bench", "variants", bc.variants, [&](const json& v) {
                return parse_bench_variant(text(v, "variants"));
            });
            bc.modes = read_list<BenchMode>(b, "bench", "modes", bc.modes,
                                            [&](const json& v) { return parse_bench_mode(text(v, "modes")); });
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
        read_count(b, "bench", "repeats", bc.repeats);
        read_enum(b, "bench", "group_policy", bc.policy, parse_group_policy);
        read_count(b, "bench", "group_count", bc.group_count);
        read_count(b, "bench", "n_sink", bc.n_sink);
        read_count(b, "bench", "sink_window", bc.sink_window);
    }
    if (doc.contains("train")) {
        const json& t = doc.at("train");
        check_keys(t, "train", {"steps", "lr", "mode", "seq_len", "batch_size", "corpus", "checkpoint", "log"});
        read_count(t, "train", "steps", rc.train.options.steps);
        read_real(t, "train", "lr", rc.train.options.lr);
        read_enum(t, "train", "mode", rc.train.options.mode, parse_train_mode);
        read_count(t, "train", "seq_len", rc.train.options.seq_len);
        read_count(t, "train", "batch_size", rc.train.options.batch_size);
        read_path(t, "train", "corpus", base_dir, rc.train.corpus);
        read_path(t, "train", "checkpoint", base_dir, rc.train.checkpoint);
        read_path(t, "train", "log", base_dir, rc.train.log);
    }
    if (doc.contains("generate")) {
        const json& g = doc.at("generate");
        check_keys(g, "generate", {"prompt", "n_new", "g_override", "s_override", "checkpoint"});
        read_string(g, "generate", "prompt", rc.generate.prompt);
        read_count(g, "generate", "n_new", rc.generate.n_new);
        read_optional_count(g, "generate", "g_override", rc.generate.g_override);
        read_optional_count(g, "generate", "s_override", rc.generate.s_override);
        read_path(g, "generate", "checkpoint", base_dir, rc.generate.checkpoint);
    }
    rc.finalize();
    return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(doc, path.parent_path());
}

json RunConfig::to_json() const {
    const AttentionConfig& a = model.attention;
    json variants = json::array();
    for (BenchVariant v : bench.variants) {
        variants.push_back(std::string(to_string(v)));
    }
    json modes = json::array();
    for (BenchMode m : bench.modes) {
        modes.push_back(std::string(to_string(m)));
    }
    const auto optional = [](const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); };
    return json{
        {"seed", seed},
        {"model",
         {{"vocab_size", model.vocab_size},
          {"d_model", model.d_model},
          {"n_layers", model.n_layers},
          {"n_heads", model.n_heads},
          {"head_dim", model.head_dim},
          {"mlp_hidden", model.mlp_hidden},
          {"init_scale", model.init_scale},
          {"variant", std::string(to_string(model.variant))}}},
        {"attention",
         {{"group_size", a.group_size},
          {"local_window", a.local_window},
          {"pooling_mode", std::string(to_string(a.pooling))},
          {"rope", {{"enabled", a.rope_enabled}, {"base", a.rope_base}}}}},
        {"bench",
         {{"lengths", bench.lengths},
          {"variants", variants},
          {"modes", modes},
          {"repeats", bench.repeats},
          {"group_policy", std::string(to_string(bench.policy))},
          {"group_count", bench.group_count},
          {"n_sink", bench.n_sink},
          {"sink_window", bench.sink_window}}},
        {"train",
         {{"steps", train.options.steps},
          {"lr", train.options.lr},
          {"mode", std::string(to_string(train.options.mode))},
          {"seq_len", train.options.seq_len},
          {"batch_size", train.options.batch_size},
          {"corpus", train.corpus.string()},
          {"checkpoint", train.checkpoint.string()},
          {"log", train.log.string()}}},
        {"generate",
         {{"prompt", generate.prompt},
          {"n_new", generate.n_new},
          {"g_override", optional(generate.g_override)},
          {"s_override", optional(generate.s_override)},
          {"checkpoint", generate.checkpoint.string()}}},
    };
}

}  // namespace cca
