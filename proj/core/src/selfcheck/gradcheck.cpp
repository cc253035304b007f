// SPDX-License-Identifier: Apache-2.0
#include "devmoe/selfcheck/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "devmoe/autodiff/ops.hpp"
#include "devmoe/continual/trainer.hpp"
#include "devmoe/linalg/decompositions.hpp"
#include "devmoe/linalg/ops.hpp"
#include "devmoe/network/model.hpp"

namespace devmoe::selfcheck {

namespace {

double entry_error(double analytic, double fd, double floor) {
  if (std::abs(analytic) <= floor) return std::abs(fd) > 1e-5 ? 1.0 : 0.0;
  return std::abs(analytic - fd) / std::max(std::abs(analytic), std::abs(fd));
}

std::string format(const char* fmt, double v) {
  char buf[128];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

// GELU whose backward drops the derivative of the tanh argument: the
// negative control for the checker.
ad::Var faulty_gelu(const ad::Var& x) {
  Matrix out = x.value();
  for (double& v : out.values()) {
    const double u = std::sqrt(2.0 / std::numbers::pi) * (v + 0.044715 * v * v * v);
    v = 0.5 * v * (1.0 + std::tanh(u));
  }
  return x.tape().record("faulty_gelu", std::move(out), {x}, [](const ad::BackwardContext& ctx) {
    auto g = ctx.input_grads[0]->values();
    auto in = ctx.inputs[0]->values();
    auto go = ctx.grad_out.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double u = std::sqrt(2.0 / std::numbers::pi) * (in[i] + 0.044715 * in[i] * in[i] * in[i]);
      g[i] += go[i] * 0.5 * (1.0 + std::tanh(u));
    }
  });
}

// Linear read-out Σ R∘y so every output entry carries a distinct weight.
ad::Var readout(const ad::Var& y, std::uint64_t seed) {
  linalg::Rng rng(seed);
  const Matrix r = linalg::gaussian(y.rows(), y.cols(), 1.0, rng);
  return ad::full_mean(ad::hadamard(y, y.tape().constant(r)));
}

struct Primitive {
  std::string name;
  std::vector<Matrix> inputs;
  LossBuilder build;
};

std::vector<Primitive> primitives(linalg::Rng& rng, bool inject_fault) {
  const auto g = [&](std::size_t r, std::size_t c) { return linalg::gaussian(r, c, 1.0, rng); };
  const auto away_from_zero = [&](std::size_t r, std::size_t c) {
    Matrix m = g(r, c);
    for (double& v : m.values()) v += v >= 0 ? 0.2 : -0.2;
    return m;
  };
  const auto probs = [&](std::size_t r, std::size_t c) {
    Matrix m(r, c);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    for (double& v : m.values()) v = u(rng);
    return m;
  };
  const auto pos_scalar = [&]() { return Matrix(1, 1, 1.5 + std::abs(g(1, 1).scalar())); };
  const Matrix labels = Matrix::from_rows({{0, 1, 1, 0, 1}});
  using S = std::span<const ad::Var>;
  std::vector<Primitive> p;
  p.push_back({"matmul", {g(3, 4), g(4, 2)}, [](ad::Tape&, S v) { return readout(ad::matmul(v[0], v[1]), 1); }});
  p.push_back({"add", {g(3, 4), g(3, 4)}, [](ad::Tape&, S v) { return readout(ad::add(v[0], v[1]), 2); }});
  p.push_back({"sub", {g(3, 4), g(3, 4)}, [](ad::Tape&, S v) { return readout(ad::sub(v[0], v[1]), 3); }});
  p.push_back({"scale", {g(3, 4)}, [](ad::Tape&, S v) { return readout(ad::scale(v[0], -1.7), 4); }});
  p.push_back({"hadamard", {g(3, 4), g(3, 4)}, [](ad::Tape&, S v) { return readout(ad::hadamard(v[0], v[1]), 5); }});
  p.push_back({"transpose", {g(3, 4)}, [](ad::Tape&, S v) { return readout(ad::transpose(v[0]), 6); }});
  p.push_back({"sum", {g(2, 3), g(2, 3), g(2, 3)}, [](ad::Tape&, S v) { return readout(ad::sum(v), 7); }});
  p.push_back({"relu", {away_from_zero(3, 4)}, [](ad::Tape&, S v) { return readout(ad::relu(v[0]), 8); }});
  p.push_back({"gelu", {g(3, 4)}, [inject_fault](ad::Tape&, S v) {
                 return readout(inject_fault ? faulty_gelu(v[0]) : ad::gelu(v[0]), 9);
               }});
  p.push_back({"sigmoid", {g(3, 4)}, [](ad::Tape&, S v) { return readout(ad::sigmoid(v[0]), 10); }});
  p.push_back({"softmax_rows", {g(3, 4)}, [](ad::Tape&, S v) { return readout(ad::softmax_rows(v[0], 0.7), 11); }});
  p.push_back({"softmax_cols", {g(3, 4)}, [](ad::Tape&, S v) { return readout(ad::softmax_cols(v[0], 1.3), 12); }});
  p.push_back({"row_mean", {g(3, 4)}, [](ad::Tape&, S v) { return readout(ad::row_mean(v[0]), 13); }});
  p.push_back({"col_mean", {g(3, 4)}, [](ad::Tape&, S v) { return readout(ad::col_mean(v[0]), 14); }});
  p.push_back({"col_l2norm", {g(3, 4)}, [](ad::Tape&, S v) { return readout(ad::col_l2norm(v[0]), 15); }});
  p.push_back({"full_mean", {g(3, 4)}, [](ad::Tape&, S v) { return ad::scale(ad::full_mean(v[0]), 2.0); }});
  p.push_back({"full_variance", {g(3, 4)}, [](ad::Tape&, S v) { return ad::full_variance(v[0]); }});
  p.push_back({"frob_sq", {g(3, 4)}, [](ad::Tape&, S v) { return ad::frob_sq(v[0]); }});
  p.push_back({"bce", {probs(1, 5)}, [labels](ad::Tape&, S v) { return ad::bce(v[0], labels); }});
  p.push_back({"divide", {g(1, 1), pos_scalar()}, [](ad::Tape&, S v) { return ad::divide(v[0], v[1]); }});
  p.push_back({"add_col_broadcast", {g(3, 4), g(3, 1)},
               [](ad::Tape&, S v) { return readout(ad::add_col_broadcast(v[0], v[1]), 16); }});
  p.push_back({"add_scalar_broadcast", {g(3, 4), g(1, 1)},
               [](ad::Tape&, S v) { return readout(ad::add_scalar_broadcast(v[0], v[1]), 17); }});
  p.push_back({"col_scale", {g(3, 4), g(1, 4)}, [](ad::Tape&, S v) { return readout(ad::col_scale(v[0], v[1]), 18); }});
  p.push_back({"group_col_sum", {g(3, 6)}, [](ad::Tape&, S v) { return readout(ad::group_col_sum(v[0], 3), 19); }});
  p.push_back({"token_mix", {g(3, 6), g(3, 3)}, [](ad::Tape&, S v) { return readout(ad::token_mix(v[0], v[1]), 20); }});
  p.push_back({"vstack", {g(2, 3), g(1, 3)}, [](ad::Tape&, S v) { return readout(ad::vstack(v), 21); }});
  p.push_back({"row_of", {g(3, 4)}, [](ad::Tape&, S v) { return readout(ad::row_of(v[0], 1), 22); }});
  p.push_back({"subsample_cols", {g(3, 7)}, [](ad::Tape&, S v) { return readout(ad::subsample_cols(v[0], 3), 23); }});
  return p;
}

CheckResult run_fd(const std::string& name, const std::vector<Primitive>& list, double tol) {
  CheckResult r{name, true, 0.0, tol, ""};
  std::string worst;
  for (const Primitive& p : list) {
    const FdReport rep = finite_difference_check(p.build, p.inputs);
    if (rep.max_rel_error > r.value) {
      r.value = rep.max_rel_error;
      worst = p.name;
    }
    if (rep.max_rel_error > tol) r.detail += (r.detail.empty() ? "failing: " : ", ") + p.name;
  }
  r.passed = r.value <= tol;
  if (r.passed) r.detail = std::to_string(list.size()) + " ops, worst " + worst;
  return r;
}

CheckResult svd_rows_check(linalg::Rng& rng) {
  std::vector<Primitive> list;
  const Matrix c3 = linalg::gaussian(3, 3, 1.0, rng);
  list.push_back({"diag(3,2,1) r=2", {Matrix::from_rows({{3, 0, 0}, {0, 2, 0}, {0, 0, 1}})},
                  [c3](ad::Tape& t, std::span<const ad::Var> v) {
                    return ad::frob_sq(ad::matmul(ad::truncated_svd_rows(v[0], 2), t.constant(c3)));
                  }});
  // 4x4 with singular values 4, 3, 2, 1 (gaps of 1).
  const linalg::QrResult q1 = linalg::qr(linalg::gaussian(4, 4, 1.0, rng));
  const linalg::QrResult q2 = linalg::qr(linalg::gaussian(4, 4, 1.0, rng));
  const std::vector<double> s{4, 3, 2, 1};
  const Matrix x = linalg::matmul(linalg::matmul(q1.q, Matrix::diagonal(s)), linalg::transpose(q2.q));
  const Matrix c4 = linalg::gaussian(4, 4, 1.0, rng);
  list.push_back({"random 4x4 r=2", {x}, [c4](ad::Tape& t, std::span<const ad::Var> v) {
                    return ad::frob_sq(ad::matmul(ad::truncated_svd_rows(v[0], 2), t.constant(c4)));
                  }});
  const Matrix tall = linalg::gaussian(9, 4, 1.0, rng);
  const Matrix wide = linalg::gaussian(3, 8, 1.0, rng);
  const Matrix c8 = linalg::gaussian(8, 2, 1.0, rng);
  list.push_back({"tall 9x4 r=3", {tall}, [c4](ad::Tape& t, std::span<const ad::Var> v) {
                    return ad::frob_sq(ad::matmul(ad::truncated_svd_rows(v[0], 3), t.constant(c4)));
                  }});
  list.push_back({"wide 3x8 r=2", {wide}, [c8](ad::Tape& t, std::span<const ad::Var> v) {
                    return ad::frob_sq(ad::matmul(ad::truncated_svd_rows(v[0], 2), t.constant(c8)));
                  }});
  return run_fd("svd_rows", list, 1e-4);
}

network::ModelConfig small_model_config() {
  network::ModelConfig mc;
  mc.backbone.num_blocks = 2;
  mc.backbone.token_count = 4;
  mc.backbone.embed_dim = 16;
  mc.backbone.ffn_hidden = 16;
  mc.backbone.seed = 5;
  mc.rank = 2;
  mc.adapter_seed = 9;
  return mc;
}

void randomize_trainables(network::DevMoeModel& model, linalg::Rng& rng, double scale) {
  model.head().weight = linalg::gaussian(1, model.head().weight.cols(), 1.0, rng);
  model.head().bias = linalg::gaussian(1, 1, 0.5, rng);
  for (auto& layer : model.layers())
    for (auto& e : layer.experts()) e.a = linalg::gaussian(e.a.rows(), e.a.cols(), scale, rng);
}

// Full cls + ort + λ₃·llb loss of a small two-task model against FD.
CheckResult composed_loss_check(linalg::Rng& rng) {
  network::DevMoeModel model(small_model_config(), moe::BankLayout::RealAndFakes);
  objective::SubspaceArchive archive(model.layers().size());
  model.expand_for_task(1);
  for (std::size_t l = 0; l < model.layers().size(); ++l) archive.add_basis(l, model.layers()[l].experts().back().b);
  model.expand_for_task(2);
  randomize_trainables(model, rng, 0.5);

  const std::size_t n = 6;
  const Matrix tokens = linalg::gaussian(16, n * 4, 1.0, rng);
  const std::vector<int> labels{0, 1, 0, 1, 1, 0};
  const objective::OrthoConfig ortho;
  const continual::VariantTraits traits = continual::traits(continual::Variant::Full);

  ad::Tape tape;
  network::ModelBinding bnd = network::bind(tape, model, true);
  const continual::BatchLoss bl = continual::batch_loss(tape, bnd, model, archive, tokens, labels, 0, ortho, traits);
  const ad::Gradients grads = tape.backward(bl.total, bnd.parameters);

  const auto value = [&]() {
    ad::Tape t;
    network::ModelBinding b = network::bind_constant(t, model);
    return continual::batch_loss(t, b, model, archive, tokens, labels, 0, ortho, traits).total.value().scalar();
  };
  CheckResult r{"composed_loss", true, 0.0, 1e-4, ""};
  std::size_t checked = 0;
  const double eps = 1e-5;
  for (std::size_t p = 0; p < bnd.targets.size(); ++p) {
    Matrix& target = *bnd.targets[p];
    const Matrix& g = grads.at(bnd.parameters[p]);
    for (std::size_t k = 0; k < target.size(); ++k) {
      const double saved = target.values()[k];
      target.values()[k] = saved + eps;
      const double up = value();
      target.values()[k] = saved - eps;
      const double down = value();
      target.values()[k] = saved;
      r.value = std::max(r.value, entry_error(g.values()[k], (up - down) / (2 * eps), 1e-8));
      ++checked;
    }
  }
  r.passed = r.value <= r.tolerance;
  r.detail = std::to_string(checked) + " parameter entries; cls " + format("%.4g", bl.cls.value().scalar()) + ", ort " +
             format("%.4g", bl.ort.value().scalar()) + ", llb " + format("%.4g", bl.llb.value().scalar());
  return r;
}

// Without gradient flow through the SVD, the PaperFormula G term depends on
// no trainable parameter of the first adapted layer.
CheckResult frozen_svd_check(linalg::Rng& rng) {
  network::DevMoeModel model(small_model_config(), moe::BankLayout::RealAndFakes);
  objective::SubspaceArchive archive(model.layers().size());
  model.expand_for_task(1);
  for (std::size_t l = 0; l < model.layers().size(); ++l) archive.add_basis(l, model.layers()[l].experts().back().b);
  model.expand_for_task(2);
  randomize_trainables(model, rng, 0.5);
  objective::OrthoConfig ortho;
  ortho.svd_grad_flow = false;
  ortho.subspace_term = false;

  ad::Tape tape;
  network::ModelBinding bnd = network::bind(tape, model, true);
  network::ForwardResult fr = network::forward(tape, bnd, model, linalg::gaussian(16, 5 * 4, 1.0, rng));
  std::vector<ad::Var> current;
  for (std::size_t l = 0; l < model.layers().size(); ++l) current.push_back(bnd.experts[l].back().b);
  objective::OrthoInputs in{current, fr.captured, model.config().rank};
  ad::Var g = objective::integrated_ortho_loss(tape, archive, in, 0, ortho);
  double worst = 0.0;
  if (g.requires_grad()) {
    const ad::Gradients grads = tape.backward(g, bnd.parameters);
    for (const ad::Var& p : bnd.parameters) worst = std::max(worst, linalg::max_abs(grads.at(p)));
  }
  return {"frozen_svd_no_flow", worst == 0.0, worst, 0.0,
          "G term value " + format("%.4g", g.value().scalar()) + ", max |grad| over trainables"};
}

}  // namespace

FdReport finite_difference_check(const LossBuilder& build, const std::vector<Matrix>& params, double eps, double floor) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Matrix& p : params) vars.push_back(tape.parameter(p));
  const ad::Var loss = build(tape, vars);
  const ad::Gradients grads = tape.backward(loss, vars);

  const auto value = [&](const std::vector<Matrix>& ps) {
    ad::Tape t;
    std::vector<ad::Var> vs;
    for (const Matrix& p : ps) vs.push_back(t.constant(p));
    return build(t, vs).value().scalar();
  };
  FdReport rep;
  std::vector<Matrix> work = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Matrix& g = grads.at(vars[p]);
    for (std::size_t k = 0; k < params[p].size(); ++k) {
      const double saved = work[p].values()[k];
      work[p].values()[k] = saved + eps;
      const double up = value(work);
      work[p].values()[k] = saved - eps;
      const double down = value(work);
      work[p].values()[k] = saved;
      rep.max_rel_error = std::max(rep.max_rel_error, entry_error(g.values()[k], (up - down) / (2 * eps), floor));
      ++rep.checked;
    }
  }
  return rep;
}

double gradient_span_residual(std::uint64_t seed, std::size_t batches) {
  linalg::Rng rng(seed);
  network::ModelConfig mc;
  mc.adapter_seed = seed;
  mc.adapt_both_ffn_linears = true;
  network::DevMoeModel model(mc, moe::BankLayout::RealAndFakes);
  model.expand_for_task(1);
  const std::size_t d = mc.backbone.embed_dim;
  const std::size_t t = mc.backbone.token_count;
  double worst = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    randomize_trainables(model, rng, 0.3);
    // n·T < d so the input span is a proper subspace.
    const std::size_t n = 1 + b % 3;
    const Matrix tokens = linalg::gaussian(d, n * t, 1.0, rng);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>((b + i) % 2);

    ad::Tape tape;
    network::ModelBinding bnd = network::bind(tape, model, true, true);
    const continual::BatchLoss bl = continual::batch_loss(tape, bnd, model, objective::SubspaceArchive(model.layers().size()),
                                                          tokens, labels, 0, objective::OrthoConfig{},
                                                          continual::traits(continual::Variant::ClsLlb));
    std::vector<ad::Var> seeds = bnd.parameters;
    for (const auto& blk : bnd.blocks) {
      seeds.push_back(blk.w1);
      seeds.push_back(blk.w2);
    }
    const ad::Gradients grads = tape.backward(bl.total, seeds);

    for (std::size_t s = 0; s < model.sites().size(); ++s) {
      const network::AdaptedSite site = model.sites()[s];
      const Matrix p = linalg::colspace_projector(bl.captured[s].value());
      std::vector<Matrix> gs;
      const auto& blk = bnd.blocks[site.block];
      gs.push_back(grads.at(site.linear == network::FfnLinear::First ? blk.w1 : blk.w2));
      for (std::size_t k = 0; k < model.layers()[s].experts().size(); ++k) {
        const ad::Var& bv = bnd.experts[s][k].b;
        if (grads.contains(bv)) gs.push_back(grads.at(bv));
      }
      for (const Matrix& g : gs) {
        const double norm = linalg::frob_norm(g);
        if (norm == 0.0) continue;
        worst = std::max(worst, linalg::frob_norm(linalg::sub(g, linalg::matmul(g, p))) / norm);
      }
    }
  }
  return worst;
}

double projection_identity_error(std::uint64_t seed, std::size_t fixtures) {
  linalg::Rng rng(seed);
  double worst = 0.0;
  for (std::size_t f = 0; f < fixtures; ++f) {
    network::ModelConfig mc;
    mc.adapter_seed = seed + f;
    network::DevMoeModel model(mc, moe::BankLayout::FakesOnly);
    model.expand_for_task(1);
    randomize_trainables(model, rng, 0.3);
    for (auto& layer : model.layers()) layer.experts().back().b = linalg::orthonormalize_rows(layer.experts().back().b);

    const std::size_t n = 4;
    const Matrix tokens = linalg::gaussian(mc.backbone.embed_dim, n * mc.backbone.token_count, 1.0, rng);
    const std::vector<int> labels{0, 1, 1, 0};
    ad::Tape tape;
    network::ModelBinding bnd = network::bind(tape, model, true, true);
    const continual::BatchLoss bl = continual::batch_loss(tape, bnd, model, objective::SubspaceArchive(model.layers().size()),
                                                          tokens, labels, 0, objective::OrthoConfig{},
                                                          continual::traits(continual::Variant::ClsOnly));
    std::vector<ad::Var> seeds = bnd.parameters;
    for (const auto& blk : bnd.blocks) seeds.push_back(blk.w1);
    const ad::Gradients grads = tape.backward(bl.total, seeds);

    const double eta = 0.05;
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
      const Matrix& b = model.layers()[l].experts().back().b;
      const Matrix& a = model.layers()[l].experts().back().a;
      const Matrix& ga = grads.at(bnd.experts[l].back().a);
      const Matrix& gw = grads.at(bnd.blocks[model.sites()[l].block].w1);
      // ΔW from updating A alone versus the full-weight step projected onto B's rows.
      const Matrix after = linalg::matmul(linalg::sub(a, linalg::scale(ga, eta)), b);
      const Matrix delta_a = linalg::sub(after, linalg::matmul(a, b));
      const Matrix delta_proj = linalg::scale(linalg::matmul(gw, linalg::matmul_tn(b, b)), -eta);
      const double norm = linalg::frob_norm(delta_proj);
      if (norm == 0.0) continue;
      worst = std::max(worst, linalg::frob_norm(linalg::sub(delta_a, delta_proj)) / norm);
    }
  }
  return worst;
}

std::vector<CheckResult> run_gradcheck(const GradcheckOptions& options) {
  linalg::Rng rng(options.seed);
  std::vector<CheckResult> out;
  out.push_back(run_fd("primitives", primitives(rng, options.inject_fault), 1e-4));
  out.push_back(svd_rows_check(rng));
  out.push_back(composed_loss_check(rng));

  const double span = gradient_span_residual(options.seed, 20);
  out.push_back({"gradient_in_input_span", span <= 1e-8, span, 1e-8, "20 batches, every adapted layer"});
  const double proj = projection_identity_error(options.seed, 10);
  out.push_back({"projection_identity", proj <= 1e-8, proj, 1e-8, "10 fixtures, one SGD step on A"});
  out.push_back(frozen_svd_check(rng));
  return out;
}

}  // namespace devmoe::selfcheck
