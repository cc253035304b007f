// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace devmoe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Options shared by the experiment subcommands.
struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::vector<std::string> overrides;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out;
};

int cmd_run(const CommonOptions& o);
int cmd_ablate(const CommonOptions& o);
int cmd_sweep_rank(const CommonOptions& o);
/// Summarises every acc_matrix.csv / auc_matrix.csv pair below `dir`.
int cmd_report(const std::filesystem::path& dir);
int cmd_gradcheck(bool inject_fault);
int cmd_propcheck(std::uint64_t seed, std::size_t cases);

}  // namespace devmoe::cli
