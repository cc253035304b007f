// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "devmoe/continual/runner.hpp"

namespace devmoe::config {

/// Invalid config text, unknown key, bad value or bad override. The message
/// names the source and, where known, the line.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  continual::RunConfig run;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<std::size_t> sweep_ranks{2, 4, 8, 16};
};

/// Parses YAML with sections stream, model, trainer, ortho plus top-level
/// seeds, variant and sweep_ranks. Missing keys keep their defaults; unknown
/// keys are rejected. Each override is "dotted.key=value" with a YAML value.
ExperimentConfig parse_config(const std::string& text, const std::string& source,
                              std::span<const std::string> overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});

/// Canonical YAML of every field; parse_config(to_yaml(c)) == c.
std::string to_yaml(const ExperimentConfig& config);
/// Hex FNV-1a digest of to_yaml(config).
std::string config_digest(const ExperimentConfig& config);

}  // namespace devmoe::config
