// SPDX-License-Identifier: Apache-2.0
#include "devmoe/selfcheck/propcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "devmoe/autodiff/ops.hpp"
#include "devmoe/eval/metrics.hpp"
#include "devmoe/linalg/decompositions.hpp"
#include "devmoe/moe/routing.hpp"
#include "devmoe/network/model.hpp"
#include "devmoe/objective/losses.hpp"

namespace devmoe::selfcheck {

std::size_t Gen::size(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }

double Gen::uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

Matrix Gen::matrix(std::size_t rows, std::size_t cols, double stddev) { return linalg::gaussian(rows, cols, stddev, rng_); }

std::vector<double> Gen::tied_scores(std::size_t n, std::size_t levels) {
  std::vector<double> s(n);
  for (double& v : s) v = static_cast<double>(size(0, levels - 1)) / static_cast<double>(levels);
  return s;
}

std::vector<int> Gen::labels(std::size_t n) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(size(0, 1));
  y[0] = 0;
  y[1] = 1;
  std::shuffle(y.begin(), y.end(), rng_);
  return y;
}

CheckResult for_all(const std::string& name, std::size_t cases, std::uint64_t seed, const Property& property) {
  Gen gen(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const std::string why = property(gen);
    if (!why.empty()) return {name, false, static_cast<double>(c), 0.0, "case " + std::to_string(c) + ": " + why};
  }
  return {name, true, static_cast<double>(cases), 0.0, std::to_string(cases) + " cases"};
}

double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return 100.0 * wins / pairs;
}

namespace {

std::string fmt(const char* what, double v) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s = %.3g", what, v);
  return buf;
}

std::string svd_invariants(Gen& g) {
  const Matrix m = g.matrix(g.size(1, 12), g.size(1, 12));
  const linalg::SvdResult f = linalg::svd(m);
  Matrix us = f.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= f.s[j];
  const double recon = linalg::frob_norm(linalg::sub(linalg::matmul(us, f.vt), m));
  if (recon > 1e-9 * std::max(1.0, linalg::frob_norm(m))) return fmt("reconstruction error", recon);
  for (std::size_t i = 0; i + 1 < f.s.size(); ++i)
    if (f.s[i] < f.s[i + 1] || f.s[i + 1] < 0) return "singular values not descending and non-negative";
  const Matrix gram = linalg::matmul_nt(f.vt, f.vt);
  const double orth = linalg::max_abs_diff(gram, Matrix::identity(gram.rows()));
  if (orth > 1e-9) return fmt("vt orthonormality error", orth);
  return {};
}

std::string projector(Gen& g) {
  const std::size_t cols = g.size(2, 10);
  const Matrix b = g.matrix(g.size(1, cols), cols);
  const Matrix p = linalg::rowspace_projector(b);
  const double idem = linalg::max_abs_diff(linalg::matmul(p, p), p);
  const double sym = linalg::max_abs_diff(p, linalg::transpose(p));
  if (idem > 1e-9) return fmt("P² − P", idem);
  if (sym > 1e-9) return fmt("P − Pᵀ", sym);
  const Matrix x = g.matrix(cols, 1);
  const Matrix px = linalg::matmul(p, x);
  const double again = linalg::max_abs_diff(linalg::matmul(p, px), px);
  if (again > 1e-9) return fmt("re-projection residual", again);
  return {};
}

moe::DevMoeLayer random_layer(Gen& g, std::size_t fakes) {
  moe::LayerConfig lc;
  lc.d_in = 8 * g.size(1, 3);
  lc.d_out = 8 * g.size(1, 3);
  lc.rank = g.size(1, 2);
  lc.temperature = g.uniform(0.5, 2.0);
  lc.gate = g.size(0, 1) == 0 ? moe::GateReduction::Mean : moe::GateReduction::L2Norm;
  moe::DevMoeLayer layer(lc, g.rng());
  for (std::size_t t = 1; t <= fakes; ++t) layer.expand_for_task(t, g.rng());
  for (auto& e : layer.experts()) e.a = g.matrix(e.a.rows(), e.a.cols());
  return layer;
}

std::string gating(Gen& g) {
  const moe::DevMoeLayer layer = random_layer(g, g.size(0, 4));
  const std::size_t t = g.size(1, 8);
  const std::size_t n = g.size(1, 6);
  const moe::MoeValues v = moe::moe_forward(layer, g.matrix(layer.config().d_in, n * t), t);
  for (std::size_t j = 0; j < v.gates.cols(); ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < v.gates.rows(); ++k) s += v.gates(k, j);
    if (std::abs(s - 1.0) > 1e-9) return fmt("gate column sum − 1", s - 1.0);
  }
  for (std::size_t l = 0; l < v.response.cols(); ++l) {
    double s = 0.0;
    for (std::size_t k = 0; k < v.response.rows(); ++k) s += v.response(k, l);
    if (std::abs(s - static_cast<double>(t)) > 1e-9) return fmt("response column sum − T", s - static_cast<double>(t));
  }
  return {};
}

std::string monotone_gating(Gen& g) {
  // Raising every component of one expert's output raises its gate weight.
  const std::size_t k = g.size(2, 5);
  const std::size_t cols = g.size(1, 6);
  std::vector<Matrix> outs;
  for (std::size_t i = 0; i < k; ++i) outs.push_back(g.matrix(4, cols));
  const std::size_t which = g.size(0, k - 1);
  const double tau = g.uniform(0.5, 2.0);
  const auto gates = [&](const std::vector<Matrix>& os) {
    ad::Tape t;
    std::vector<ad::Var> vs;
    for (const Matrix& o : os) vs.push_back(t.constant(o));
    return ad::softmax_cols(moe::gate_scores(vs, moe::GateReduction::Mean), tau).value();
  };
  const Matrix before = gates(outs);
  for (double& v : outs[which].values()) v += g.uniform(0.01, 1.0);
  const Matrix after = gates(outs);
  for (std::size_t j = 0; j < cols; ++j)
    if (!(after(which, j) > before(which, j))) return "gate weight did not increase";
  return {};
}

std::string llb(Gen& g) {
  const std::size_t k = g.size(1, 5);
  const std::size_t n = g.size(1, 8);
  Matrix resp(k, n);
  for (double& v : resp.values()) v = g.uniform(0.0, 4.0);
  resp(0, 0) += 0.1;
  Matrix coeff(k, n);
  for (double& v : coeff.values()) v = g.size(0, 1) ? 1.15 : 0.85;
  const double base = objective::llb_loss(resp, coeff);
  if (base < 0.0) return fmt("negative loss", base);
  const double c = g.uniform(0.1, 10.0);
  const double scaled = objective::llb_loss(linalg::scale(resp, c), coeff);
  if (std::abs(scaled - c * base) > 1e-9 * std::max(1.0, c * base)) return fmt("homogeneity error", scaled - c * base);
  return {};
}

std::string auc_oracle(Gen& g) {
  const std::size_t n = g.size(2, 40);
  const std::vector<double> s = g.tied_scores(n, g.size(1, 6));
  const std::vector<int> y = g.labels(n);
  const double fast = eval::auc(s, y);
  const double slow = pairwise_auc(s, y);
  if (fast != slow) return fmt("auc − pairwise", fast - slow);
  return {};
}

std::string auc_monotone(Gen& g) {
  const std::size_t n = g.size(2, 40);
  const std::vector<double> s = g.tied_scores(n, g.size(2, 8));
  const std::vector<int> y = g.labels(n);
  const double a = g.uniform(0.1, 3.0);
  const double b = g.uniform(-2.0, 2.0);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(a * s[i]) + b;
  if (eval::auc(s, y) != eval::auc(t, y)) return "auc changed under a monotone map";
  return {};
}

std::string forgetting_affine(Gen& g) {
  const std::size_t tasks = g.size(2, 6);
  eval::ScoreMatrix m(tasks, eval::Metric::Acc);
  eval::ScoreMatrix shifted(tasks, eval::Metric::Acc);
  eval::ScoreMatrix scaled(tasks, eval::Metric::Acc);
  const double c = g.uniform(-10.0, 10.0);
  const double k = g.uniform(0.5, 1.0);
  for (std::size_t t = 0; t < tasks; ++t)
    for (std::size_t i = 0; i <= t; ++i) {
      const double v = g.uniform(15.0, 85.0);
      m.set(t, i, v);
      shifted.set(t, i, v + c);
      scaled.set(t, i, v * k);
    }
  const std::size_t row = tasks - 1;
  const double af = eval::average_forgetting(m, row);
  if (std::abs(eval::average_forgetting(shifted, row) - af) > 1e-9) return "AF changed under a shift";
  if (std::abs(eval::average_forgetting(scaled, row) - k * af) > 1e-9) return "AF did not scale linearly";
  return {};
}

std::string zero_init_neutral(Gen& g) {
  // From a fresh model every A is zero, so expansion leaves predictions intact.
  network::ModelConfig mc;
  mc.adapter_seed = g.size(1, 1000);
  network::DevMoeModel model(mc, moe::BankLayout::RealAndFakes);
  model.head().weight = g.matrix(1, mc.backbone.embed_dim);
  const Matrix tokens = g.matrix(mc.backbone.embed_dim, g.size(1, 4) * mc.backbone.token_count);
  const network::Predictions before = network::predict(model, tokens);
  model.expand_for_task(1);
  const network::Predictions after = network::predict(model, tokens);
  double delta = 0.0;
  for (std::size_t i = 0; i < before.probs.size(); ++i) delta = std::max(delta, std::abs(after.probs[i] - before.probs[i]));
  if (delta > 1e-9) return fmt("prediction delta at fresh expansion", delta);

  // With trained experts the new one adds nothing; the others are rescaled
  // per token by (1 - g_new).
  moe::DevMoeLayer layer = random_layer(g, g.size(0, 2));
  const std::size_t t = g.size(1, 8);
  const Matrix h = g.matrix(layer.config().d_in, g.size(1, 4) * t);
  const moe::MoeValues v0 = moe::moe_forward(layer, h, t);
  layer.expand_for_task(layer.fake_count() + 1, g.rng());
  const moe::MoeValues v1 = moe::moe_forward(layer, h, t);
  const std::size_t k_new = layer.experts().size() - 1;
  if (linalg::frob_norm(layer.experts()[k_new].delta_weight()) != 0.0) return "new expert has non-zero delta weight";
  Matrix expect = v0.mixed;
  for (std::size_t j = 0; j < expect.cols(); ++j)
    for (std::size_t i = 0; i < expect.rows(); ++i) expect(i, j) *= 1.0 - v1.gates(k_new, j);
  const double resid = linalg::max_abs_diff(expect, v1.mixed);
  if (resid > 1e-12 * std::max(1.0, linalg::frob_norm(v0.mixed))) return fmt("renormalization residual", resid);
  return {};
}

}  // namespace

std::vector<CheckResult> run_propcheck(std::uint64_t seed, std::size_t cases) {
  std::vector<CheckResult> out;
  out.push_back(for_all("svd_invariants", cases, seed, svd_invariants));
  out.push_back(for_all("rowspace_projector", cases, seed + 1, projector));
  out.push_back(for_all("gate_normalization", cases, seed + 2, gating));
  out.push_back(for_all("monotone_gating", cases, seed + 3, monotone_gating));
  out.push_back(for_all("llb_nonnegative_homogeneous", cases, seed + 4, llb));
  out.push_back(for_all("auc_pairwise_oracle", cases, seed + 5, auc_oracle));
  out.push_back(for_all("auc_monotone_invariance", cases, seed + 6, auc_monotone));
  out.push_back(for_all("forgetting_affine", cases, seed + 7, forgetting_affine));
  out.push_back(for_all("zero_init_neutrality", std::min<std::size_t>(cases, 10), seed + 8, zero_init_neutral));
  return out;
}

}  // namespace devmoe::selfcheck
