// SPDX-License-Identifier: Apache-2.0
#include "devmoe/continual/task_stream.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "devmoe/linalg/ops.hpp"

namespace devmoe::continual {

namespace {

constexpr std::uint64_t kDirectionStream = 0xd1;
constexpr std::uint64_t kSampleStream = 0x5a;

linalg::Rng make_rng(std::uint64_t master, std::uint64_t task, std::uint64_t stream, std::uint64_t split = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(task), static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(split)};
  return linalg::Rng(seq);
}

std::vector<double> cosine_atom(std::size_t d, double freq, double phase) {
  std::vector<double> v(d);
  double norm = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    v[i] = std::cos(std::numbers::pi * freq * (static_cast<double>(i) + 0.5) / static_cast<double>(d) + phase);
    norm += v[i] * v[i];
  }
  for (double& x : v) x /= std::sqrt(norm);
  return v;
}

// Removes the components along `basis` rows and normalises. Returns false if
// nothing is left.
bool orthogonalize(std::vector<double>& v, const Matrix& basis, std::size_t rows) {
  for (std::size_t k = 0; k < rows; ++k) {
    double dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * basis(k, i);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * basis(k, i);
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm < 1e-8) return false;
  for (double& x : v) x /= norm;
  return true;
}

}  // namespace

std::string to_string(PerturbationKind k) {
  return k == PerturbationKind::SubspaceShift ? "subspace_shift" : "band_artifact";
}

PerturbationKind parse_perturbation_kind(const std::string& s) {
  if (s == "subspace_shift") return PerturbationKind::SubspaceShift;
  if (s == "band_artifact") return PerturbationKind::BandArtifact;
  throw std::invalid_argument("unknown perturbation kind '" + s + "' (expected subspace_shift or band_artifact)");
}

void StreamConfig::validate() const {
  if (num_tasks == 0) throw std::invalid_argument("stream.num_tasks must be >= 1");
  if (n_train < 2 || n_train % 2 != 0) throw std::invalid_argument("stream.n_train must be even and >= 2");
  if (n_test < 2 || n_test % 2 != 0) throw std::invalid_argument("stream.n_test must be even and >= 2");
  if (token_count == 0 || embed_dim == 0) throw std::invalid_argument("stream token_count and embed_dim must be >= 1");
  if (real_basis == 0 || real_basis + 2 >= embed_dim) {
    throw std::invalid_argument("stream.real_basis must lie in [1, embed_dim - 3]");
  }
  if (noise_std < 0.0 || magnitude < 0.0) throw std::invalid_argument("stream noise_std and magnitude must be >= 0");
}

Matrix Dataset::gather(std::span<const std::size_t> samples) const {
  std::vector<std::size_t> cols;
  cols.reserve(samples.size() * token_count);
  for (std::size_t s : samples) {
    if (s >= size()) throw std::out_of_range("Dataset::gather: sample index out of range");
    for (std::size_t j = 0; j < token_count; ++j) cols.push_back(s * token_count + j);
  }
  return linalg::gather_cols(tokens, cols);
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> samples) const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (std::size_t s : samples) out.push_back(labels.at(s));
  return out;
}

TaskStream::TaskStream(const StreamConfig& config) : config_(config) {
  config.validate();
  real_basis_ = Matrix(config.real_basis, config.embed_dim);
  for (std::size_t k = 0; k < config.real_basis; ++k) {
    const auto atom = cosine_atom(config.embed_dim, static_cast<double>(k), 0.0);
    for (std::size_t i = 0; i < config.embed_dim; ++i) real_basis_(k, i) = atom[i];
  }
  for (std::size_t t = 1; t <= config.num_tasks; ++t) {
    TaskSpec s;
    s.task_id = t;
    s.fake_seed = make_rng(config.master_seed, t, kDirectionStream)();
    s.n_train = config.n_train;
    s.n_test = config.n_test;
    s.kind = config.kind;
    s.magnitude = config.magnitude;
    specs_.push_back(s);
    directions_.push_back(draw_directions(s));
  }
}

const TaskSpec& TaskStream::spec(std::size_t task_id) const {
  if (task_id == 0 || task_id > specs_.size()) {
    throw std::out_of_range("task id " + std::to_string(task_id) + " outside [1, " + std::to_string(specs_.size()) + "]");
  }
  return specs_[task_id - 1];
}

Matrix TaskStream::perturbation_directions(std::size_t task_id) const {
  (void)spec(task_id);
  return directions_[task_id - 1];
}

// Subspace-shift directions avoid the previous tasks' directions while the
// complement of the real basis has room (a window of (d - k0)/2 - 1 tasks).
Matrix TaskStream::draw_directions(const TaskSpec& s) const {
  const std::size_t d = config_.embed_dim;
  const std::size_t k0 = config_.real_basis;
  const std::size_t window = s.kind == PerturbationKind::SubspaceShift ? (d - k0) / 2 - 1 : 0;
  const std::size_t first_prior = s.task_id - 1 > window ? s.task_id - 1 - window : 0;
  const std::size_t prior_rows = 2 * (s.task_id - 1 - first_prior);
  linalg::Rng rng(s.fake_seed);
  Matrix basis(k0 + prior_rows + 2, d);
  for (std::size_t k = 0; k < k0; ++k)
    for (std::size_t i = 0; i < d; ++i) basis(k, i) = real_basis_(k, i);
  for (std::size_t t = first_prior; t + 1 < s.task_id; ++t)
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t i = 0; i < d; ++i) basis(k0 + 2 * (t - first_prior) + r, i) = directions_[t](r, i);
  const std::size_t fixed = k0 + prior_rows;

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const std::size_t band_slots = d - k0 - 1;
  for (std::size_t row = 0; row < 2; ++row) {
    std::vector<double> v;
    bool ok = false;
    for (int attempt = 0; attempt < 16 && !ok; ++attempt) {
      if (s.kind == PerturbationKind::SubspaceShift) {
        v.assign(d, 0.0);
        for (double& x : v) x = normal(rng);
      } else {
        const std::size_t freq = k0 + (2 * (s.task_id - 1) + row + static_cast<std::size_t>(attempt)) % band_slots;
        v = cosine_atom(d, static_cast<double>(freq), phase(rng));
      }
      ok = orthogonalize(v, basis, fixed + row);
    }
    if (!ok) throw std::runtime_error("perturbation_directions: could not draw an independent direction");
    for (std::size_t i = 0; i < d; ++i) basis(fixed + row, i) = v[i];
  }
  return linalg::slice_rows(basis, fixed, 2);
}

Dataset TaskStream::generate_split(const TaskSpec& spec, std::size_t n, std::uint64_t split) const {
  const std::size_t d = config_.embed_dim;
  const std::size_t t = config_.token_count;
  const std::size_t k0 = config_.real_basis;
  const Matrix dirs = perturbation_directions(spec.task_id);
  linalg::Rng rng = make_rng(config_.master_seed, spec.task_id, kSampleStream, split);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Mean offset of the two perturbation coefficients; both carry N(0, 0.3²) jitter.
  const double mean0 = 1.0;
  const double mean1 = spec.kind == PerturbationKind::SubspaceShift ? 0.0 : 1.0;
  const double norm = spec.kind == PerturbationKind::SubspaceShift ? 1.0 : 1.0 / std::sqrt(2.0);

  Dataset ds;
  ds.token_count = t;
  ds.tokens = Matrix(d, n * t);
  ds.labels.assign(n, 0);
  std::vector<double> coeff(k0);
  for (std::size_t s = 0; s < n; ++s) {
    const bool fake = s >= n / 2;
    ds.labels[s] = fake ? 1 : 0;
    for (std::size_t j = 0; j < t; ++j) {
      const std::size_t col = s * t + j;
      for (double& c : coeff) c = normal(rng);
      for (std::size_t i = 0; i < d; ++i) {
        double v = config_.noise_std * normal(rng);
        for (std::size_t k = 0; k < k0; ++k) v += coeff[k] * real_basis_(k, i);
        ds.tokens(i, col) = v;
      }
      if (fake) {
        const double z0 = norm * spec.magnitude * (mean0 + 0.3 * normal(rng));
        const double z1 = norm * spec.magnitude * (mean1 + 0.3 * normal(rng));
        for (std::size_t i = 0; i < d; ++i) ds.tokens(i, col) += z0 * dirs(0, i) + z1 * dirs(1, i);
      }
    }
  }
  return ds;
}

TaskData TaskStream::generate_task(std::size_t task_id) const {
  const TaskSpec& s = spec(task_id);
  return {generate_split(s, s.n_train, 0), generate_split(s, s.n_test, 1)};
}

}  // namespace devmoe::continual
