// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "cca/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <json.hpp>

namespace cca {

namespace {

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
    const AttentionConfig& a = c.attention;
    return json{
        {"vocab_size", c.vocab_size},
        {"d_model", c.d_model},
        {"n_layers", c.n_layers},
        {"n_heads", c.n_heads},
        {"head_dim", c.head_dim},
        {"mlp_hidden", c.mlp_hidden},
        {"init_scale", c.init_scale},
        {"seed", c.seed},
        {"variant", std::string(to_string(c.variant))},
        {"attention",
         {{"group_size", a.group_size},
          {"local_window", a.local_window},
          {"pooling_mode", std::string(to_string(a.pooling))},
          {"rope", {{"enabled", a.rope_enabled}, {"base", a.rope_base}}}}},
    };
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.head_dim = j.at("head_dim").get<std::size_t>();
    c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
    c.init_scale = j.at("init_scale").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.variant = parse_attention_variant(j.at("variant").get<std::string>());
    const json& a = j.at("attention");
    c.attention.group_size = a.at("group_size").get<std::size_t>();
    c.attention.local_window = a.at("local_window").get<std::size_t>();
    c.attention.pooling = parse_pooling_mode(a.at("pooling_mode").get<std::string>());
    c.attention.rope_enabled = a.at("rope").at("enabled").get<bool>();
    c.attention.rope_base = a.at("rope").at("base").get<double>();
    c.attention.n_heads = c.n_heads;
    c.attention.head_dim = c.head_dim;
    return c;
}

void put_le(double value, unsigned char* out) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
    for (int b = 0; b < 8; ++b) {
        out[b] = static_cast<unsigned char>(bits >> (8 * b));
    }
}

double get_le(const unsigned char* in) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) {
        bits = (bits << 8) | in[b];
    }
    return std::bit_cast<double>(bits);
}

}  // namespace

std::filesystem::path checkpoint_payload_path(const std::filesystem::path& manifest) {
    return std::filesystem::path(manifest.string() + ".bin");
}

void checkpoint_save(const ModelParams& params, const std::filesystem::path& path) {
    params.config.validate();
    const std::filesystem::path payload_path = checkpoint_payload_path(path);
    json tensors = json::array();
    std::vector<unsigned char> payload;
    payload.reserve(params.parameter_count() * 8);
    for (const Parameter& p : params.tensors) {
        tensors.push_back({{"name", p.name},
                           {"shape", {p.value.rows(), p.value.cols()}},
                           {"offset", payload.size()}});
        for (double v : p.value.values()) {
            unsigned char bytes[8];
            put_le(v, bytes);
            payload.insert(payload.end(), bytes, bytes + 8);
        }
    }
    const json manifest{
        {"format", kCheckpointFormat},
        {"version", kCheckpointVersion},
        {"config", config_to_json(params.config)},
        {"payload", payload_path.filename().string()},
        {"payload_bytes", payload.size()},
        {"tensors", tensors},
    };

    std::ofstream bin(payload_path, std::ios::binary | std::ios::trunc);
    bin.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!bin) {
        throw Error("cannot write checkpoint payload " + payload_path.string());
    }
    std::ofstream out(path, std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) {
        throw Error("cannot write checkpoint manifest " + path.string());
    }
}

ModelParams checkpoint_load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open checkpoint manifest " + path.string());
    }
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("checkpoint manifest " + path.string() + " is not valid JSON: " + e.what());
    }

    ModelParams params;
    std::vector<unsigned char> payload;
    std::size_t payload_bytes = 0;
    try {
        if (manifest.at("format").get<std::string>() != kCheckpointFormat) {
            throw Error("not a checkpoint manifest (format '" + manifest.at("format").get<std::string>() + "')");
        }
        const int version = manifest.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw Error("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                        std::to_string(kCheckpointVersion));
        }
        params = model_init(config_from_json(manifest.at("config")));
        const json& tensors = manifest.at("tensors");
        if (tensors.size() != params.tensors.size()) {
            throw Error("checkpoint lists " + std::to_string(tensors.size()) + " tensors, config implies " +
                        std::to_string(params.tensors.size()));
        }
        std::size_t expected_offset = 0;
        for (std::size_t t = 0; t < tensors.size(); ++t) {
            const json& entry = tensors[t];
            const Parameter& p = params.tensors[t];
            const std::string name = entry.at("name").get<std::string>();
            if (name != p.name) {
                throw Error("checkpoint tensor " + std::to_string(t) + " is '" + name + "', expected '" + p.name +
                            "'");
            }
            const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 2 || shape[0] != p.value.rows() || shape[1] != p.value.cols()) {
                std::string got;
                for (std::size_t i = 0; i < shape.size(); ++i) {
                    got += (i ? "x" : "") + std::to_string(shape[i]);
                }
                throw Error("shape mismatch for tensor '" + name + "': manifest has " + got + ", config implies " +
                            shape_string(p.value));
            }
            if (entry.at("offset").get<std::size_t>() != expected_offset) {
                throw Error("bad byte offset for tensor '" + name + "'");
            }
            expected_offset += p.value.size() * 8;
        }
        payload_bytes = manifest.at("payload_bytes").get<std::size_t>();
        if (payload_bytes != expected_offset) {
            throw Error("manifest payload_bytes " + std::to_string(payload_bytes) + " disagrees with tensor shapes (" +
                        std::to_string(expected_offset) + ")");
        }
    } catch (const json::exception& e) {
        throw Error("malformed checkpoint manifest " + path.string() + ": " + e.what());
    }

    const std::filesystem::path payload_path =
        path.parent_path() / manifest.at("payload").get<std::string>();
    std::ifstream bin(payload_path, std::ios::binary);
    if (!bin) {
        throw Error("cannot open checkpoint payload " + payload_path.string());
    }
    payload.assign(std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>());
    if (payload.size() < payload_bytes) {
        throw Error("truncated payload: " + payload_path.string() + " has " + std::to_string(payload.size()) +
                    " bytes, manifest expects " + std::to_string(payload_bytes));
    }
    if (payload.size() > payload_bytes) {
        throw Error("payload " + payload_path.string() + " has trailing bytes");
    }
    std::size_t offset = 0;
    for (Parameter& p : params.tensors) {
        for (double& v : p.value.values()) {
            v = get_le(payload.data() + offset);
            offset += 8;
        }
    }
    return params;
}

}  // namespace cca
