// SPDX-License-Identifier: Apache-2.0
#include "devmoe/objective/losses.hpp"

#include <stdexcept>
#include <string>

#include "devmoe/autodiff/ops.hpp"
#include "devmoe/linalg/decompositions.hpp"
#include "devmoe/linalg/ops.hpp"

namespace devmoe::objective {

std::string to_string(GradOrthMode m) {
  return m == GradOrthMode::PaperFormula ? "paper_formula" : "stored_prev_spaces";
}

GradOrthMode parse_grad_orth_mode(const std::string& s) {
  if (s == "paper_formula") return GradOrthMode::PaperFormula;
  if (s == "stored_prev_spaces") return GradOrthMode::StoredPrevSpaces;
  throw std::invalid_argument("unknown grad_orth_mode '" + s + "' (expected paper_formula or stored_prev_spaces)");
}

std::vector<ScheduleEntry> default_schedule() { return {{0, 5, 0.5, 0.5}, {5, 10, 1.0, 0.1}, {10, 20, 1.0, 0.01}}; }

void OrthoConfig::validate(std::size_t epochs) const {
  if (schedule.empty()) throw std::invalid_argument("ortho.schedule: empty");
  std::size_t expected = 0;
  for (const ScheduleEntry& e : schedule) {
    if (e.begin != expected || e.end <= e.begin) {
      throw std::invalid_argument("ortho.schedule: ranges must be contiguous from epoch 0; entry [" +
                                  std::to_string(e.begin) + ", " + std::to_string(e.end) + ") breaks this");
    }
    if (e.lambda1 < 0.0 || e.lambda2 < 0.0) throw std::invalid_argument("ortho.schedule: lambdas must be >= 0");
    expected = e.end;
  }
  if (expected < epochs) {
    throw std::invalid_argument("ortho.schedule: covers epochs [0, " + std::to_string(expected) + ") but training runs " +
                                std::to_string(epochs));
  }
  if (lambda3 < 0.0) throw std::invalid_argument("ortho.lambda3 must be >= 0");
  if (column_cap == 0) throw std::invalid_argument("ortho.column_cap must be >= 1");
  if (!(gap_epsilon > 0.0)) throw std::invalid_argument("ortho.gap_epsilon must be > 0");
}

std::pair<double, double> lambda_schedule(const OrthoConfig& config, std::size_t epoch) {
  for (const ScheduleEntry& e : config.schedule) {
    if (epoch >= e.begin && epoch < e.end) return {e.lambda1, e.lambda2};
  }
  throw std::out_of_range("lambda_schedule: epoch " + std::to_string(epoch) + " is outside the configured ranges");
}

std::pair<double, double> lambda_schedule(std::size_t epoch) { return lambda_schedule(OrthoConfig{}, epoch); }

double subspace_overlap(const Matrix& bt, const Matrix& bi) {
  if (bt.cols() != bi.cols()) {
    throw std::invalid_argument("subspace_overlap: " + bt.shape_string() + " vs " + bi.shape_string());
  }
  return linalg::frob_sq(linalg::matmul_nt(bt, bi));
}

ad::Var subspace_overlap(const ad::Var& bt, const ad::Var& bi) {
  if (bt.cols() != bi.cols()) {
    throw std::invalid_argument("subspace_overlap: " + bt.value().shape_string() + " vs " + bi.value().shape_string());
  }
  return ad::frob_sq(ad::matmul(bt, ad::transpose(bi)));
}

namespace {
std::size_t stride_for(std::size_t cols, std::size_t cap) { return cols <= cap ? 1 : (cols + cap - 1) / cap; }
}  // namespace

ad::Var input_space_basis(const ad::Var& h, std::size_t r, const OrthoConfig& config) {
  const std::size_t stride = stride_for(h.cols(), config.column_cap);
  ad::Var sampled = stride == 1 ? h : ad::subsample_cols(h, stride);
  ad::SvdRowsOptions opts;
  opts.gap_epsilon = config.gap_epsilon;
  opts.gradient_flow = config.svd_grad_flow;
  return ad::truncated_svd_rows(ad::transpose(sampled), r, opts);
}

Matrix input_space_basis(const Matrix& h, std::size_t r, std::size_t column_cap) {
  const std::size_t stride = stride_for(h.cols(), column_cap);
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < h.cols(); j += stride) cols.push_back(j);
  return linalg::top_r_right_rows(linalg::transpose(linalg::gather_cols(h, cols)), r);
}

ad::Var grad_space_term(const ad::Var& h, const ad::Var& bi, std::size_t r, const OrthoConfig& config) {
  ad::Var v = input_space_basis(h, r, config);
  if (v.cols() != bi.cols()) {
    throw std::invalid_argument("grad_space_term: basis " + v.value().shape_string() + " vs " + bi.value().shape_string());
  }
  return ad::frob_sq(ad::matmul(v, ad::transpose(bi)));
}

ad::Var integrated_ortho_loss(ad::Tape& tape, const SubspaceArchive& archive, const OrthoInputs& inputs,
                              std::size_t epoch, const OrthoConfig& config) {
  const std::size_t layers = archive.layer_count();
  if (inputs.current_bases.size() != layers) {
    throw std::invalid_argument("integrated_ortho_loss: " + std::to_string(inputs.current_bases.size()) +
                                " current bases for " + std::to_string(layers) + " archived layers");
  }
  const bool empty = layers == 0 || archive.bases(0).empty();
  if (empty) return tape.constant(Matrix(1, 1));
  auto [lambda1, lambda2] = lambda_schedule(config, epoch);
  if (!config.subspace_term) lambda1 = 0.0;
  if (!config.gradient_term) lambda2 = 0.0;
  if (lambda1 == 0.0 && lambda2 == 0.0) return tape.constant(Matrix(1, 1));
  const bool paper = config.mode == GradOrthMode::PaperFormula;
  if (lambda2 != 0.0 && paper && inputs.captured.size() != layers) {
    throw std::invalid_argument("integrated_ortho_loss: captured inputs missing for the gradient-space term");
  }

  std::vector<ad::Var> per_layer;
  for (std::size_t l = 0; l < layers; ++l) {
    const ad::Var& bt = inputs.current_bases[l];
    const auto& bases = archive.bases(l);
    std::vector<ad::Var> terms;
    ad::Var v;
    if (lambda2 != 0.0 && paper) v = input_space_basis(inputs.captured[l], inputs.rank, config);
    for (std::size_t i = 0; i < bases.size(); ++i) {
      ad::Var bi = tape.constant(bases[i]);
      if (lambda1 != 0.0) terms.push_back(ad::scale(subspace_overlap(bt, bi), lambda1));
      if (lambda2 != 0.0) {
        ad::Var g;
        if (paper) {
          g = ad::frob_sq(ad::matmul(v, ad::transpose(bi)));
        } else {
          const auto& spaces = archive.input_spaces(l);
          if (spaces.size() != bases.size()) {
            throw std::logic_error("integrated_ortho_loss: stored input spaces do not match archived bases");
          }
          g = ad::frob_sq(ad::matmul(tape.constant(spaces[i]), ad::transpose(bt)));
        }
        terms.push_back(ad::scale(g, lambda2));
      }
    }
    per_layer.push_back(ad::scale(ad::sum(terms), 1.0 / static_cast<double>(bases.size())));
  }
  return ad::scale(ad::sum(per_layer), 1.0 / static_cast<double>(layers));
}

ad::Var llb_loss(const ad::Var& response, const Matrix& coefficients) {
  if (!response.value().same_shape(coefficients)) {
    throw std::invalid_argument("llb_loss: response " + response.value().shape_string() + " vs coefficients " +
                                coefficients.shape_string());
  }
  ad::Var weighted = ad::hadamard(response, response.tape().constant(coefficients));
  ad::Var mean = ad::full_mean(weighted);
  if (!(mean.value().scalar() > 0.0)) {
    throw std::domain_error("llb_loss: weighted response has non-positive mean (all-zero response)");
  }
  return ad::divide(ad::full_variance(weighted), mean);
}

double llb_loss(const Matrix& response, const Matrix& coefficients) {
  ad::Tape tape;
  return llb_loss(tape.constant(response), coefficients).value().scalar();
}

ad::Var total_loss(const ad::Var& cls, const ad::Var& ort, const ad::Var& llb, double lambda3) {
  std::vector<ad::Var> parts{cls, ort, ad::scale(llb, lambda3)};
  return ad::sum(parts);
}

}  // namespace devmoe::objective
