// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "devmoe/network/model.hpp"

namespace devmoe::network {

/// Binary checkpoint: magic, version, caller-supplied config digest, model
/// config, adapter RNG state, every matrix with its shape, and a trailing
/// FNV-1a checksum of the payload.
void save_checkpoint(const std::filesystem::path& path, const DevMoeModel& model, const std::string& config_digest);

/// Throws std::runtime_error naming the path if the file is unreadable,
/// truncated, corrupted, or was written under a different config digest.
DevMoeModel load_checkpoint(const std::filesystem::path& path, const std::string& expected_digest);

}  // namespace devmoe::network
