// SPDX-License-Identifier: Apache-2.0
#include "devmoe/eval/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace devmoe::eval {

double accuracy(std::span<const double> probs, std::span<const int> labels, double threshold) {
  if (probs.size() != labels.size()) {
    throw std::invalid_argument("accuracy: " + std::to_string(probs.size()) + " predictions vs " +
                                std::to_string(labels.size()) + " labels");
  }
  if (probs.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const int pred = probs[i] > threshold ? 1 : 0;
    if (pred == labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(probs.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auc: " + std::to_string(scores.size()) + " scores vs " +
                                std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of positive ranks with ties sharing their mean rank; ranks are
  // doubled to stay in integers.
  std::size_t pos = 0;
  std::size_t neg = 0;
  unsigned long long rank_sum2 = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // 1-based ranks i+1..j share the mean rank (i+1+j)/2.
    const unsigned long long twice_mean_rank = static_cast<unsigned long long>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      const int y = labels[order[k]];
      if (y != 0 && y != 1) throw std::invalid_argument("auc: label " + std::to_string(y) + " is not 0 or 1");
      if (y == 1) {
        ++pos;
        rank_sum2 += twice_mean_rank;
      } else {
        ++neg;
      }
    }
    i = j;
  }
  if (pos == 0 || neg == 0) throw std::invalid_argument("auc: both classes must be present");
  // U = R_pos − pos(pos+1)/2, doubled: 2U = rank_sum2 − pos(pos+1).
  const unsigned long long u2 = rank_sum2 - static_cast<unsigned long long>(pos) * (pos + 1);
  return 100.0 * static_cast<double>(u2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

std::string to_string(Metric m) { return m == Metric::Acc ? "acc" : "auc"; }

ScoreMatrix::ScoreMatrix(std::size_t tasks, Metric metric)
    : tasks_(tasks), metric_(metric), cells_(tasks * (tasks + 1) / 2) {}

std::size_t ScoreMatrix::index(std::size_t t, std::size_t i) const {
  if (t >= tasks_ || i > t) {
    throw std::out_of_range("ScoreMatrix: cell (" + std::to_string(t) + ", " + std::to_string(i) +
                            ") outside the lower triangle of a " + std::to_string(tasks_) + "-task matrix");
  }
  return t * (t + 1) / 2 + i;
}

void ScoreMatrix::set(std::size_t t, std::size_t i, double value) {
  if (!(value >= 0.0 && value <= 100.0)) {
    throw std::invalid_argument("ScoreMatrix: score " + std::to_string(value) + " outside [0, 100]");
  }
  cells_[index(t, i)] = value;
}

double ScoreMatrix::at(std::size_t t, std::size_t i) const {
  const auto& c = cells_[index(t, i)];
  if (!c) throw std::out_of_range("ScoreMatrix: cell (" + std::to_string(t) + ", " + std::to_string(i) + ") is empty");
  return *c;
}

bool ScoreMatrix::has(std::size_t t, std::size_t i) const {
  return t < tasks_ && i <= t && cells_[index(t, i)].has_value();
}

std::size_t ScoreMatrix::complete_rows() const {
  for (std::size_t t = 0; t < tasks_; ++t)
    for (std::size_t i = 0; i <= t; ++i)
      if (!has(t, i)) return t;
  return tasks_;
}

std::size_t ScoreMatrix::filled_cells() const {
  return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](const auto& c) { return c.has_value(); }));
}

double avg_row(std::span<const double> row) {
  if (row.empty()) throw std::invalid_argument("avg_row: empty row");
  double s = 0.0;
  for (double v : row) s += v;
  return s / static_cast<double>(row.size());
}

double avg_row(const ScoreMatrix& m, std::size_t t) {
  std::vector<double> row;
  for (std::size_t i = 0; i <= t; ++i) row.push_back(m.at(t, i));
  return avg_row(row);
}

double average_forgetting(std::span<const double> diagonal, std::span<const double> row) {
  if (row.size() < 2) throw std::invalid_argument("average_forgetting: needs at least one earlier task");
  const std::size_t prev = row.size() - 1;
  if (diagonal.size() < prev) throw std::invalid_argument("average_forgetting: diagonal shorter than the row");
  double s = 0.0;
  for (std::size_t i = 0; i < prev; ++i) s += diagonal[i] - row[i];
  return s / static_cast<double>(prev);
}

double average_forgetting(const ScoreMatrix& m, std::size_t t) {
  if (t < 1) throw std::invalid_argument("average_forgetting: row 0 has no earlier task");
  std::vector<double> diag;
  std::vector<double> row;
  for (std::size_t i = 0; i <= t; ++i) {
    diag.push_back(m.at(i, i));
    row.push_back(m.at(t, i));
  }
  return average_forgetting(diag, row);
}

}  // namespace devmoe::eval
