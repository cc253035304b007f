// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace devmoe::eval {

/// Percent of samples whose thresholded prediction matches the 0/1 label.
double accuracy(std::span<const double> probs, std::span<const int> labels, double threshold = 0.5);

/// Mann-Whitney AUC in percent: P(score_fake > score_real) + ½·P(tie).
/// Label 1 marks the positive (fake) class. Requires both classes.
double auc(std::span<const double> scores, std::span<const int> labels);

enum class Metric { Acc, Auc };
std::string to_string(Metric m);

/// Lower-triangular T x T table; entry (t, i) is the score on task i's test
/// set after training task t. Indices are 0-based.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(std::size_t tasks, Metric metric);

  /// Requires i <= t < size() and a value in [0, 100].
  void set(std::size_t t, std::size_t i, double value);
  [[nodiscard]] double at(std::size_t t, std::size_t i) const;
  /// False for empty cells and cells outside the lower triangle.
  [[nodiscard]] bool has(std::size_t t, std::size_t i) const;
  [[nodiscard]] std::size_t size() const noexcept { return tasks_; }
  [[nodiscard]] Metric metric() const noexcept { return metric_; }
  /// Number of leading rows with every cell filled.
  [[nodiscard]] std::size_t complete_rows() const;
  [[nodiscard]] std::size_t filled_cells() const;

  friend bool operator==(const ScoreMatrix&, const ScoreMatrix&) = default;

 private:
  [[nodiscard]] std::size_t index(std::size_t t, std::size_t i) const;
  std::size_t tasks_ = 0;
  Metric metric_ = Metric::Acc;
  std::vector<std::optional<double>> cells_;
};

/// Mean of row t's t+1 entries.
double avg_row(const ScoreMatrix& m, std::size_t t);
double avg_row(std::span<const double> row);

/// (1/t)·Σ_{i<t} (m(i, i) − m(t, i)) for 0-based row t >= 1: each earlier
/// task's drop from the score right after it was learned.
double average_forgetting(const ScoreMatrix& m, std::size_t t);
double average_forgetting(std::span<const double> diagonal, std::span<const double> row);

}  // namespace devmoe::eval
