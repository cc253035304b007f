// SPDX-License-Identifier: Apache-2.0
#include "devmoe/eval/embedding.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "devmoe/eval/report.hpp"
#include "devmoe/linalg/decompositions.hpp"
#include "devmoe/linalg/ops.hpp"

namespace devmoe::eval {

PcaResult pca_2d(const Matrix& features) {
  const std::size_t d = features.rows();
  const std::size_t n = features.cols();
  PcaResult out{Matrix(n, 2), Matrix(2, d), {0.0, 0.0}};
  if (n == 0 || d == 0) return out;

  Matrix centred(n, d);
  for (std::size_t i = 0; i < d; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += features(i, j);
    mean /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) centred(j, i) = features(i, j) - mean;
  }
  const linalg::SvdResult f = linalg::svd(centred);
  const std::size_t k = std::min<std::size_t>(2, f.s.size());
  for (std::size_t a = 0; a < k; ++a) {
    out.explained_variance[a] = f.s[a] * f.s[a] / static_cast<double>(n);
    for (std::size_t i = 0; i < d; ++i) out.axes(a, i) = f.vt(a, i);
  }
  const Matrix proj = linalg::matmul_nt(centred, out.axes);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t a = 0; a < 2; ++a) out.coords(j, a) = proj(j, a);
  return out;
}

EmbeddingTable export_embeddings(const network::DevMoeModel& model, std::span<const EmbeddingSource> sources) {
  const std::size_t d = model.config().backbone.embed_dim;
  std::size_t total = 0;
  for (const EmbeddingSource& s : sources) {
    if (s.tokens == nullptr) throw std::invalid_argument("export_embeddings: null token matrix");
    total += s.labels.size();
  }
  Matrix features(d, total);
  EmbeddingTable table;
  std::size_t col = 0;
  for (const EmbeddingSource& s : sources) {
    const network::Predictions p = network::predict(model, *s.tokens);
    if (p.pooled.cols() != s.labels.size()) {
      throw std::invalid_argument("export_embeddings: " + std::to_string(p.pooled.cols()) + " samples but " +
                                  std::to_string(s.labels.size()) + " labels");
    }
    for (std::size_t j = 0; j < p.pooled.cols(); ++j, ++col) {
      for (std::size_t i = 0; i < d; ++i) features(i, col) = p.pooled(i, j);
      table.task.push_back(s.task);
      table.label.push_back(s.labels[j]);
    }
  }
  table.pca = pca_2d(features);
  return table;
}

void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::string text = "x,y,task,label\n";
  char buf[96];
  for (std::size_t j = 0; j < table.task.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%zu,%d\n", table.pca.coords(j, 0), table.pca.coords(j, 1), table.task[j],
                  table.label[j]);
    text += buf;
  }
  write_text_file(path, text);
}

}  // namespace devmoe::eval
