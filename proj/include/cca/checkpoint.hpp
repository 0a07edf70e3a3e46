// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Checkpoints are two files: a JSON manifest at `path` describing the config
// and every tensor (name, shape, byte offset), and a payload at `path + ".bin"`
// holding all tensors back to back as little-endian f64.

#include <filesystem>
#include <string>

#include "cca/model.hpp"

namespace cca {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "cca-checkpoint";

std::filesystem::path checkpoint_payload_path(const std::filesystem::path& manifest);

void checkpoint_save(const ModelParams& params, const std::filesystem::path& path);

/// Throws on a version mismatch, a truncated payload or a shape that disagrees with the config.
ModelParams checkpoint_load(const std::filesystem::path& path);

}  // namespace cca
