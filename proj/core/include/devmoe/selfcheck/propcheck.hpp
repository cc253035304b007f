// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "devmoe/linalg/ops.hpp"
#include "devmoe/selfcheck/gradcheck.hpp"

namespace devmoe::selfcheck {

/// Seeded value generator for property checks.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::size_t size(std::size_t lo, std::size_t hi);
  double uniform(double lo, double hi);
  Matrix matrix(std::size_t rows, std::size_t cols, double stddev = 1.0);
  /// Scores drawn from a small grid so ties are common.
  std::vector<double> tied_scores(std::size_t n, std::size_t levels);
  /// 0/1 labels with both classes present (n >= 2).
  std::vector<int> labels(std::size_t n);
  linalg::Rng& rng() noexcept { return rng_; }

 private:
  linalg::Rng rng_;
};

/// A property returns an empty string on success or a failure description.
using Property = std::function<std::string(Gen&)>;

/// Runs `property` on `cases` generated inputs; stops at the first failure
/// and reports the case index.
CheckResult for_all(const std::string& name, std::size_t cases, std::uint64_t seed, const Property& property);

/// O(n²) Mann-Whitney count, in percent.
double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Every built-in property: svd, projector, gating, response sums, LLB,
/// AUC, forgetting metric, and zero-init neutrality.
std::vector<CheckResult> run_propcheck(std::uint64_t seed = 3, std::size_t cases = 50);

}  // namespace devmoe::selfcheck
