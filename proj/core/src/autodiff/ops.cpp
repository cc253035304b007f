// SPDX-License-Identifier: Apache-2.0
#include "devmoe/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "devmoe/linalg/ops.hpp"

namespace devmoe::ad {
namespace la = devmoe::linalg;

namespace {

[[noreturn]] void shape_error(const std::string& op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

void require_same(const std::string& op, const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value())) shape_error(op, a.value(), b.value());
}

void require_scalar(const std::string& op, const Var& a) {
  if (!a.value().is_scalar()) {
    throw std::invalid_argument(op + ": expected a 1x1 operand, got " + a.value().shape_string());
  }
}

// Elementwise map y = f(x) with dy/dx = df(x, y).
template <typename F, typename DF>
Var unary_map(const std::string& op, const Var& x, F f, DF df) {
  Matrix y = x.value();
  for (double& v : y.values()) v = f(v);
  return x.tape().record(op, std::move(y), {x}, [df](const BackwardContext& ctx) {
    auto g = ctx.input_grads[0]->values();
    auto xs = ctx.inputs[0]->values();
    auto ys = ctx.value_out.values();
    auto go = ctx.grad_out.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * df(xs[i], ys[i]);
  });
}

constexpr double kGeluC = 0.044715;
const double kGeluK = std::sqrt(2.0 / std::numbers::pi);

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  return a.tape().record("matmul", la::matmul(a.value(), b.value()), {a, b}, [](const BackwardContext& ctx) {
    if (ctx.input_grads[0]) la::axpy(*ctx.input_grads[0], la::matmul_nt(ctx.grad_out, *ctx.inputs[1]));
    if (ctx.input_grads[1]) la::axpy(*ctx.input_grads[1], la::matmul_tn(*ctx.inputs[0], ctx.grad_out));
  });
}

Var add(const Var& a, const Var& b) {
  require_same("add", a, b);
  return a.tape().record("add", la::add(a.value(), b.value()), {a, b}, [](const BackwardContext& ctx) {
    for (Matrix* g : ctx.input_grads)
      if (g) la::axpy(*g, ctx.grad_out);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same("sub", a, b);
  return a.tape().record("sub", la::sub(a.value(), b.value()), {a, b}, [](const BackwardContext& ctx) {
    if (ctx.input_grads[0]) la::axpy(*ctx.input_grads[0], ctx.grad_out);
    if (ctx.input_grads[1]) la::axpy(*ctx.input_grads[1], ctx.grad_out, -1.0);
  });
}

Var scale(const Var& a, double c) {
  return a.tape().record("scale", la::scale(a.value(), c), {a}, [c](const BackwardContext& ctx) {
    la::axpy(*ctx.input_grads[0], ctx.grad_out, c);
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same("hadamard", a, b);
  return a.tape().record("hadamard", la::hadamard(a.value(), b.value()), {a, b}, [](const BackwardContext& ctx) {
    if (ctx.input_grads[0]) la::axpy(*ctx.input_grads[0], la::hadamard(ctx.grad_out, *ctx.inputs[1]));
    if (ctx.input_grads[1]) la::axpy(*ctx.input_grads[1], la::hadamard(ctx.grad_out, *ctx.inputs[0]));
  });
}

Var transpose(const Var& a) {
  return a.tape().record("transpose", la::transpose(a.value()), {a}, [](const BackwardContext& ctx) {
    la::axpy(*ctx.input_grads[0], la::transpose(ctx.grad_out));
  });
}

Var sum(std::span<const Var> terms) {
  if (terms.empty()) throw std::invalid_argument("sum: no terms");
  Matrix total = terms[0].value();
  for (std::size_t i = 1; i < terms.size(); ++i) {
    require_same("sum", terms[0], terms[i]);
    la::axpy(total, terms[i].value());
  }
  return terms[0].tape().record("sum", std::move(total), {terms.begin(), terms.end()},
                                [](const BackwardContext& ctx) {
                                  for (Matrix* g : ctx.input_grads)
                                    if (g) la::axpy(*g, ctx.grad_out);
                                });
}

Var relu(const Var& x) {
  return unary_map(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& x) {
  return unary_map(
      "gelu", x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluK * (v + kGeluC * v * v * v))); },
      [](double v, double) {
        const double t = std::tanh(kGeluK * (v + kGeluC * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluK * (1.0 + 3.0 * kGeluC * v * v);
      });
}

Var sigmoid(const Var& x) {
  return unary_map(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var softmax_rows(const Var& x, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax_rows: temperature must be positive");
  const Matrix& in = x.value();
  Matrix y(in.rows(), in.cols());
  for (std::size_t i = 0; i < in.rows(); ++i) {
    auto src = in.row_span(i);
    auto dst = y.row_span(i);
    const double mx = *std::max_element(src.begin(), src.end()) / temperature;
    double z = 0.0;
    for (std::size_t j = 0; j < src.size(); ++j) z += dst[j] = std::exp(src[j] / temperature - mx);
    for (double& v : dst) v /= z;
  }
  return x.tape().record("softmax_rows", std::move(y), {x}, [temperature](const BackwardContext& ctx) {
    const Matrix& y = ctx.value_out;
    Matrix& g = *ctx.input_grads[0];
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += ctx.grad_out(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) g(i, j) += y(i, j) * (ctx.grad_out(i, j) - dot) / temperature;
    }
  });
}

Var softmax_cols(const Var& x, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax_cols: temperature must be positive");
  const Matrix& in = x.value();
  const std::size_t r = in.rows(), c = in.cols();
  Matrix y(r, c);
  std::vector<double> mx(c, -std::numeric_limits<double>::infinity()), z(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) mx[j] = std::max(mx[j], in(i, j) / temperature);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) z[j] += y(i, j) = std::exp(in(i, j) / temperature - mx[j]);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y(i, j) /= z[j];
  return x.tape().record("softmax_cols", std::move(y), {x}, [temperature](const BackwardContext& ctx) {
    const Matrix& y = ctx.value_out;
    Matrix& g = *ctx.input_grads[0];
    std::vector<double> dot(y.cols(), 0.0);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) dot[j] += ctx.grad_out(i, j) * y(i, j);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) g(i, j) += y(i, j) * (ctx.grad_out(i, j) - dot[j]) / temperature;
  });
}

Var row_mean(const Var& x) {
  const Matrix& in = x.value();
  if (in.cols() == 0) throw std::invalid_argument("row_mean: no columns");
  Matrix y(in.rows(), 1);
  for (std::size_t i = 0; i < in.rows(); ++i) {
    double acc = 0.0;
    for (double v : in.row_span(i)) acc += v;
    y(i, 0) = acc / static_cast<double>(in.cols());
  }
  return x.tape().record("row_mean", std::move(y), {x}, [](const BackwardContext& ctx) {
    Matrix& g = *ctx.input_grads[0];
    const double inv = 1.0 / static_cast<double>(g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (double& v : g.row_span(i)) v += ctx.grad_out(i, 0) * inv;
  });
}

Var col_mean(const Var& x) {
  const Matrix& in = x.value();
  if (in.rows() == 0) throw std::invalid_argument("col_mean: no rows");
  Matrix y(1, in.cols());
  for (std::size_t i = 0; i < in.rows(); ++i)
    for (std::size_t j = 0; j < in.cols(); ++j) y(0, j) += in(i, j);
  for (double& v : y.values()) v /= static_cast<double>(in.rows());
  return x.tape().record("col_mean", std::move(y), {x}, [](const BackwardContext& ctx) {
    Matrix& g = *ctx.input_grads[0];
    const double inv = 1.0 / static_cast<double>(g.rows());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += ctx.grad_out(0, j) * inv;
  });
}

Var col_l2norm(const Var& x) {
  const Matrix& in = x.value();
  Matrix y(1, in.cols());
  for (std::size_t i = 0; i < in.rows(); ++i)
    for (std::size_t j = 0; j < in.cols(); ++j) y(0, j) += in(i, j) * in(i, j);
  for (double& v : y.values()) v = std::sqrt(v);
  return x.tape().record("col_l2norm", std::move(y), {x}, [](const BackwardContext& ctx) {
    Matrix& g = *ctx.input_grads[0];
    const Matrix& in = *ctx.inputs[0];
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) {
        const double n = ctx.value_out(0, j);
        if (n > 0.0) g(i, j) += ctx.grad_out(0, j) * in(i, j) / n;
      }
  });
}

Var full_mean(const Var& x) {
  const Matrix& in = x.value();
  if (in.empty()) throw std::invalid_argument("full_mean: empty input");
  double acc = 0.0;
  for (double v : in.values()) acc += v;
  return x.tape().record("full_mean", Matrix(1, 1, acc / static_cast<double>(in.size())), {x},
                         [](const BackwardContext& ctx) {
                           Matrix& g = *ctx.input_grads[0];
                           const double d = ctx.grad_out.scalar() / static_cast<double>(g.size());
                           for (double& v : g.values()) v += d;
                         });
}

Var full_variance(const Var& x) {
  const Matrix& in = x.value();
  if (in.empty()) throw std::invalid_argument("full_variance: empty input");
  const double n = static_cast<double>(in.size());
  double mean = 0.0;
  for (double v : in.values()) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : in.values()) var += (v - mean) * (v - mean);
  var /= n;
  return x.tape().record("full_variance", Matrix(1, 1, var), {x}, [mean, n](const BackwardContext& ctx) {
    auto g = ctx.input_grads[0]->values();
    auto xs = ctx.inputs[0]->values();
    const double f = 2.0 * ctx.grad_out.scalar() / n;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += f * (xs[i] - mean);
  });
}

Var frob_sq(const Var& x) {
  return x.tape().record("frob_sq", Matrix(1, 1, la::frob_sq(x.value())), {x}, [](const BackwardContext& ctx) {
    la::axpy(*ctx.input_grads[0], *ctx.inputs[0], 2.0 * ctx.grad_out.scalar());
  });
}

Var bce(const Var& pred, const Matrix& labels) {
  if (!pred.value().same_shape(labels)) shape_error("bce", pred.value(), labels);
  if (labels.empty()) throw std::invalid_argument("bce: empty input");
  static constexpr double kClamp = 1e-12;
  const auto p = pred.value().values();
  const auto y = labels.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], kClamp, 1.0 - kClamp);
    acc -= y[i] * std::log(pc) + (1.0 - y[i]) * std::log(1.0 - pc);
  }
  const double n = static_cast<double>(p.size());
  return pred.tape().record("bce", Matrix(1, 1, acc / n), {pred}, [labels, n](const BackwardContext& ctx) {
    auto g = ctx.input_grads[0]->values();
    auto p = ctx.inputs[0]->values();
    auto y = labels.values();
    const double go = ctx.grad_out.scalar() / n;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double pc = std::clamp(p[i], kClamp, 1.0 - kClamp);
      g[i] += go * ((1.0 - y[i]) / (1.0 - pc) - y[i] / pc);
    }
  });
}

Var divide(const Var& a, const Var& b) {
  require_scalar("divide", a);
  require_scalar("divide", b);
  const double bv = b.value().scalar();
  if (bv == 0.0) throw std::domain_error("divide: division by zero");
  return a.tape().record("divide", Matrix(1, 1, a.value().scalar() / bv), {a, b}, [](const BackwardContext& ctx) {
    const double av = ctx.inputs[0]->scalar();
    const double bv = ctx.inputs[1]->scalar();
    const double go = ctx.grad_out.scalar();
    if (ctx.input_grads[0]) (*ctx.input_grads[0])(0, 0) += go / bv;
    if (ctx.input_grads[1]) (*ctx.input_grads[1])(0, 0) -= go * av / (bv * bv);
  });
}

Var add_col_broadcast(const Var& x, const Var& b) {
  if (b.cols() != 1 || b.rows() != x.rows()) shape_error("add_col_broadcast", x.value(), b.value());
  Matrix y = x.value();
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const double bi = b.value()(i, 0);
    for (double& v : y.row_span(i)) v += bi;
  }
  return x.tape().record("add_col_broadcast", std::move(y), {x, b}, [](const BackwardContext& ctx) {
    if (ctx.input_grads[0]) la::axpy(*ctx.input_grads[0], ctx.grad_out);
    if (Matrix* gb = ctx.input_grads[1]) {
      for (std::size_t i = 0; i < ctx.grad_out.rows(); ++i) {
        double acc = 0.0;
        for (double v : ctx.grad_out.row_span(i)) acc += v;
        (*gb)(i, 0) += acc;
      }
    }
  });
}

Var add_scalar_broadcast(const Var& x, const Var& s) {
  require_scalar("add_scalar_broadcast", s);
  Matrix y = x.value();
  const double sv = s.value().scalar();
  for (double& v : y.values()) v += sv;
  return x.tape().record("add_scalar_broadcast", std::move(y), {x, s}, [](const BackwardContext& ctx) {
    if (ctx.input_grads[0]) la::axpy(*ctx.input_grads[0], ctx.grad_out);
    if (Matrix* gs = ctx.input_grads[1]) {
      double acc = 0.0;
      for (double v : ctx.grad_out.values()) acc += v;
      (*gs)(0, 0) += acc;
    }
  });
}

Var col_scale(const Var& x, const Var& w) {
  if (w.rows() != 1 || w.cols() != x.cols()) shape_error("col_scale", x.value(), w.value());
  Matrix y = x.value();
  const Matrix& wv = w.value();
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto row = y.row_span(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] *= wv(0, j);
  }
  return x.tape().record("col_scale", std::move(y), {x, w}, [](const BackwardContext& ctx) {
    const Matrix& xv = *ctx.inputs[0];
    const Matrix& wv = *ctx.inputs[1];
    const Matrix& go = ctx.grad_out;
    if (Matrix* gx = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < go.rows(); ++i)
        for (std::size_t j = 0; j < go.cols(); ++j) (*gx)(i, j) += go(i, j) * wv(0, j);
    }
    if (Matrix* gw = ctx.input_grads[1]) {
      for (std::size_t i = 0; i < go.rows(); ++i)
        for (std::size_t j = 0; j < go.cols(); ++j) (*gw)(0, j) += go(i, j) * xv(i, j);
    }
  });
}

Var group_col_sum(const Var& x, std::size_t group) {
  const Matrix& in = x.value();
  if (group == 0 || in.cols() % group != 0) {
    throw std::invalid_argument("group_col_sum: " + std::to_string(in.cols()) +
                                " columns not divisible by group " + std::to_string(group));
  }
  const std::size_t n = in.cols() / group;
  Matrix y(in.rows(), n);
  for (std::size_t i = 0; i < in.rows(); ++i) {
    auto src = in.row_span(i);
    auto dst = y.row_span(i);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t k = 0; k < group; ++k) dst[s] += src[s * group + k];
  }
  return x.tape().record("group_col_sum", std::move(y), {x}, [group](const BackwardContext& ctx) {
    Matrix& g = *ctx.input_grads[0];
    for (std::size_t i = 0; i < g.rows(); ++i) {
      auto dst = g.row_span(i);
      auto src = ctx.grad_out.row_span(i);
      for (std::size_t s = 0; s < src.size(); ++s)
        for (std::size_t k = 0; k < group; ++k) dst[s * group + k] += src[s];
    }
  });
}

Var token_mix(const Var& x, const Var& mix) {
  const Matrix& in = x.value();
  const Matrix& m = mix.value();
  const std::size_t t = m.rows();
  if (m.cols() != t || t == 0 || in.cols() % t != 0) shape_error("token_mix", in, m);
  const std::size_t n = in.cols() / t;
  Matrix y(in.rows(), in.cols());
  for (std::size_t i = 0; i < in.rows(); ++i) {
    auto src = in.row_span(i);
    auto dst = y.row_span(i);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t j = 0; j < t; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t; ++k) acc += m(j, k) * src[s * t + k];
        dst[s * t + j] = acc;
      }
  }
  return x.tape().record("token_mix", std::move(y), {x, mix}, [t, n](const BackwardContext& ctx) {
    const Matrix& in = *ctx.inputs[0];
    const Matrix& m = *ctx.inputs[1];
    const Matrix& go = ctx.grad_out;
    if (Matrix* gx = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < go.rows(); ++i) {
        auto src = go.row_span(i);
        auto dst = gx->row_span(i);
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t j = 0; j < t; ++j) {
            const double gj = src[s * t + j];
            for (std::size_t k = 0; k < t; ++k) dst[s * t + k] += m(j, k) * gj;
          }
      }
    }
    if (Matrix* gm = ctx.input_grads[1]) {
      for (std::size_t i = 0; i < go.rows(); ++i) {
        auto gsrc = go.row_span(i);
        auto xsrc = in.row_span(i);
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t j = 0; j < t; ++j)
            for (std::size_t k = 0; k < t; ++k) (*gm)(j, k) += gsrc[s * t + j] * xsrc[s * t + k];
      }
    }
  });
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("vstack: no parts");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const Var& p : parts) {
    if (p.cols() != c) shape_error("vstack", parts[0].value(), p.value());
    r += p.rows();
  }
  Matrix y(r, c);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(),
              y.values().begin() + static_cast<std::ptrdiff_t>(offset * c));
    offset += p.rows();
  }
  return parts[0].tape().record("vstack", std::move(y), {parts.begin(), parts.end()}, [](const BackwardContext& ctx) {
    std::size_t offset = 0;
    const std::size_t c = ctx.grad_out.cols();
    for (std::size_t p = 0; p < ctx.inputs.size(); ++p) {
      const std::size_t rows = ctx.inputs[p]->rows();
      if (Matrix* g = ctx.input_grads[p]) {
        auto dst = g->values();
        auto src = ctx.grad_out.values().subspan(offset * c, rows * c);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
      offset += rows;
    }
  });
}

Var row_of(const Var& x, std::size_t k) {
  if (k >= x.rows()) {
    throw std::invalid_argument("row_of: row " + std::to_string(k) + " outside " + x.value().shape_string());
  }
  return x.tape().record("row_of", la::slice_rows(x.value(), k, 1), {x}, [k](const BackwardContext& ctx) {
    auto dst = ctx.input_grads[0]->row_span(k);
    auto src = ctx.grad_out.row_span(0);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  });
}

Var subsample_cols(const Var& x, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("subsample_cols: stride must be positive");
  if (stride == 1) return x;
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < x.cols(); j += stride) cols.push_back(j);
  return x.tape().record("subsample_cols", la::gather_cols(x.value(), cols), {x}, [stride](const BackwardContext& ctx) {
    Matrix& g = *ctx.input_grads[0];
    for (std::size_t i = 0; i < ctx.grad_out.rows(); ++i)
      for (std::size_t j = 0; j < ctx.grad_out.cols(); ++j) g(i, j * stride) += ctx.grad_out(i, j);
  });
}

}  // namespace devmoe::ad
