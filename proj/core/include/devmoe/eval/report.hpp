// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "devmoe/eval/metrics.hpp"

namespace devmoe::eval {

/// One optimisation step's loss components.
struct StepRecord {
  std::size_t task = 0;  ///< 1-based
  std::size_t epoch = 0;
  std::size_t step = 0;  ///< global step within the task
  double cls = 0.0;
  double ort = 0.0;
  double llb = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double total = 0.0;
};

struct ReportInput {
  std::string variant;
  std::uint64_t seed = 0;
  ScoreMatrix acc;
  ScoreMatrix auc;
  std::span<const StepRecord> steps;
  std::size_t params_total = 0;
  std::size_t params_trainable = 0;
  std::string config_digest;
};

/// Writes acc_matrix.csv, auc_matrix.csv (row_task,col_task,score),
/// metrics.csv (per-row Avg and AF), loss_log.csv and summary.json into
/// `dir`, creating it if needed. Output bytes depend only on the input.
/// Throws std::runtime_error naming the path on I/O failure.
void emit_report(const ReportInput& input, const std::filesystem::path& dir);

/// Text of a score-matrix CSV (task ids 1-based, two decimals).
std::string matrix_csv(const ScoreMatrix& m);
std::string summary_json(const ReportInput& input);

/// Inverse of matrix_csv. Throws std::runtime_error naming `source` and the
/// line on malformed input.
ScoreMatrix parse_matrix_csv(const std::string& text, Metric metric, const std::string& source);

/// Writes `text` to `path` or throws naming the path.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace devmoe::eval
