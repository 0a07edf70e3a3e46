// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// JSON run configuration shared by the CLI subcommands. Unknown keys are
// rejected at every level; absent keys take the defaults below. Relative
// paths are resolved against the directory holding the config file.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "cca/bench.hpp"
#include "cca/model.hpp"

namespace cca {

class ConfigError : public Error {
public:
    using Error::Error;
};

struct TrainSection {
    TrainOptions options;
    std::filesystem::path corpus;
    std::filesystem::path checkpoint = "model.ckpt.json";
    std::filesystem::path log = "train_log.csv";
};

struct GenerateSection {
    std::string prompt = "Call me ";
    std::size_t n_new = 64;
    std::optional<std::size_t> g_override;
    std::optional<std::size_t> s_override;
    std::filesystem::path checkpoint;  // empty: use a freshly initialised model
};

struct RunConfig {
    std::uint64_t seed = 0;
    ModelConfig model;  // model.attention holds the attention section
    BenchConfig bench;  // heads and head_dim follow the model
    TrainSection train;
    GenerateSection generate;

    /// Copies seed and attention settings into the dependent sections and validates everything.
    void finalize();
    nlohmann::json to_json() const;
};

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);

/// Reads and parses a config file. Any problem is reported as ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace cca
