// SPDX-License-Identifier: Apache-2.0
// Linear logistic probe on mean-pooled token features, fitted by full-batch
// gradient descent. Test-only.
#pragma once

#include <cmath>
#include <vector>

#include "devmoe/continual/task_stream.hpp"

namespace oracle {

struct LinearProbe {
  std::vector<double> w;
  double b = 0.0;
  std::vector<double> mean;
  std::vector<double> scale;
};

inline std::vector<std::vector<double>> pooled_features(const devmoe::continual::Dataset& ds) {
  const std::size_t d = ds.tokens.rows();
  const std::size_t t = ds.token_count;
  std::vector<std::vector<double>> f(ds.size(), std::vector<double>(d, 0.0));
  for (std::size_t s = 0; s < ds.size(); ++s)
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < t; ++j) f[s][i] += ds.tokens(i, s * t + j);
      f[s][i] /= static_cast<double>(t);
    }
  return f;
}

inline double probe_logit(const LinearProbe& p, const std::vector<double>& x) {
  double z = p.b;
  for (std::size_t i = 0; i < x.size(); ++i) z += p.w[i] * (x[i] - p.mean[i]) / p.scale[i];
  return z;
}

inline LinearProbe fit_probe(const devmoe::continual::Dataset& ds, int iterations = 2000, double lr = 0.5) {
  const auto x = pooled_features(ds);
  const std::size_t d = x.front().size();
  const double n = static_cast<double>(x.size());
  LinearProbe p;
  p.w.assign(d, 0.0);
  p.mean.assign(d, 0.0);
  p.scale.assign(d, 0.0);
  for (const auto& row : x)
    for (std::size_t i = 0; i < d; ++i) p.mean[i] += row[i] / n;
  for (const auto& row : x)
    for (std::size_t i = 0; i < d; ++i) p.scale[i] += (row[i] - p.mean[i]) * (row[i] - p.mean[i]) / n;
  for (double& s : p.scale) s = std::sqrt(s) + 1e-12;
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (std::size_t s = 0; s < x.size(); ++s) {
      const double err = 1.0 / (1.0 + std::exp(-probe_logit(p, x[s]))) - ds.labels[s];
      for (std::size_t i = 0; i < d; ++i) gw[i] += err * (x[s][i] - p.mean[i]) / p.scale[i] / n;
      gb += err / n;
    }
    for (std::size_t i = 0; i < d; ++i) p.w[i] -= lr * gw[i];
    p.b -= lr * gb;
  }
  return p;
}

/// Percent correct; with `only_label` >= 0 just the samples of that class.
inline double probe_accuracy(const LinearProbe& p, const devmoe::continual::Dataset& ds, int only_label = -1) {
  const auto x = pooled_features(ds);
  double hits = 0.0;
  double count = 0.0;
  for (std::size_t s = 0; s < x.size(); ++s) {
    if (only_label >= 0 && ds.labels[s] != only_label) continue;
    count += 1.0;
    hits += ((probe_logit(p, x[s]) > 0.0) == (ds.labels[s] == 1)) ? 1.0 : 0.0;
  }
  return 100.0 * hits / count;
}

}  // namespace oracle
