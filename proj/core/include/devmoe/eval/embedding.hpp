// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "devmoe/linalg/matrix.hpp"
#include "devmoe/network/model.hpp"

namespace devmoe::eval {

using linalg::Matrix;

struct PcaResult {
  Matrix coords;  ///< n x 2
  Matrix axes;    ///< 2 x d, orthonormal rows (zero rows when d < 2)
  /// Variance along each axis, descending.
  std::vector<double> explained_variance;
};

/// 2-D PCA of the columns of `features` (d x n), centred on the column mean.
PcaResult pca_2d(const Matrix& features);

/// One labelled token set to embed.
struct EmbeddingSource {
  std::size_t task = 0;
  const Matrix* tokens = nullptr;
  std::span<const int> labels;
};

struct EmbeddingTable {
  PcaResult pca;
  std::vector<std::size_t> task;
  std::vector<int> label;
};

/// Mean-pooled pre-classifier features of every sample, projected to 2-D.
EmbeddingTable export_embeddings(const network::DevMoeModel& model, std::span<const EmbeddingSource> sources);

/// CSV with header x,y,task,label.
void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingTable& table);

}  // namespace devmoe::eval
