#include "se/flow/coupling_flow.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <cmath>
#include <random>

#include "se/errors.hpp"

namespace se::flow {

namespace {

using grad::Tensor;
using grad::Var;

Tensor strict_lower_mask(std::size_t d) {
  Tensor m({d, d});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) m.at(i, j) = 1.0;
  return m;
}

Tensor strict_upper_mask(std::size_t d) {
  Tensor m({d, d});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) m.at(i, j) = 1.0;
  return m;
}

Tensor gaussian(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Tensor t({rows, cols});
  for (double& v : t.values()) v = normal(rng);
  return t;
}

std::size_t parse_size(const std::map<std::string, std::string>& topology, const std::string& key) {
  auto it = topology.find(key);
  if (it == topology.end()) throw DataError("coupling-flow topology lacks '" + key + "'");
  return static_cast<std::size_t>(std::stoull(it->second));
}

Var squash_log_scale(Var raw) {
  return grad::scale(grad::tanh(grad::scale(raw, 1.0 / kLogScaleBound)), kLogScaleBound);
}

}  // namespace

CouplingFlow::CouplingFlow(const CouplingFlowConfig& config) : config_(config) {
  if (config_.dim < 2) throw ContractError("coupling flow needs dim >= 2");
  if (config_.blocks == 0) throw ContractError("coupling flow needs at least one block");
  if (config_.hidden == 0) throw ContractError("coupling flow needs a hidden width");
  widths_.push_back(config_.dim);
  for (std::size_t b = 0; b + 1 < config_.blocks; ++b) {
    std::size_t next = widths_.back();
    if (emits_after(b)) {
      if (config_.emit_dims + 2 > next) throw ContractError("emission schedule leaves fewer than 2 dimensions");
      next -= config_.emit_dims;
    }
    widths_.push_back(next);
  }

  std::mt19937_64 rng(config_.seed);
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    const std::size_t d = widths_[b];
    const std::size_t h = d / 2;
    const std::size_t r = d - h;
    const std::size_t hid = config_.hidden;
    const std::string p = "block" + std::to_string(b) + ".";
    BlockSlots s{};
    s.perm = add_tensor(p + "mix.perm", Tensor::identity(d), false);
    s.sign = add_tensor(p + "mix.sign", Tensor({1, d}, 1.0), false);
    s.lower = add_tensor(p + "mix.lower", Tensor({d, d}), true);
    s.upper = add_tensor(p + "mix.upper", Tensor({d, d}), true);
    s.log_scale = add_tensor(p + "mix.log_scale", Tensor({1, d}), true);
    s.w1 = add_tensor(p + "coupling.w1", gaussian(h, hid, 1.0 / std::sqrt(static_cast<double>(h)), rng), true);
    s.b1 = add_tensor(p + "coupling.b1", Tensor({1, hid}), true);
    s.w2 = add_tensor(p + "coupling.w2", gaussian(hid, hid, 1.0 / std::sqrt(static_cast<double>(hid)), rng), true);
    s.b2 = add_tensor(p + "coupling.b2", Tensor({1, hid}), true);
    s.w3 = add_tensor(p + "coupling.w3", Tensor({hid, 2 * r}), true);
    s.b3 = add_tensor(p + "coupling.b3", Tensor({1, 2 * r}), true);
    slots_.push_back(s);
    if (config_.mixing_init == MixingInit::kRandomRotation) {
      Matrix g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
      const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
      set_mixing_matrix(b, q);
    }
  }
}

CouplingFlow::CouplingFlow(const CouplingFlow& other)
    : Flow(other), config_(other.config_), widths_(other.widths_), slots_(other.slots_) {}

bool CouplingFlow::emits_after(std::size_t block) const {
  return config_.emit_every > 0 && (block + 1) % config_.emit_every == 0 && block + 1 < config_.blocks;
}

std::vector<std::size_t> CouplingFlow::latent_chunk_sizes() const {
  std::vector<std::size_t> sizes;
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    if (emits_after(b)) sizes.push_back(config_.emit_dims);
  }
  sizes.push_back(widths_.back());
  return sizes;
}

std::map<std::string, std::string> CouplingFlow::topology() const {
  return {{"dim", std::to_string(config_.dim)},
          {"blocks", std::to_string(config_.blocks)},
          {"emit_every", std::to_string(config_.emit_every)},
          {"emit_dims", std::to_string(config_.emit_dims)},
          {"hidden", std::to_string(config_.hidden)},
          {"mixing_init", config_.mixing_init == MixingInit::kIdentity ? "identity" : "random-rotation"},
          {"seed", std::to_string(config_.seed)}};
}

CouplingFlowConfig CouplingFlow::config_from_topology(const std::map<std::string, std::string>& topology) {
  CouplingFlowConfig c;
  c.dim = parse_size(topology, "dim");
  c.blocks = parse_size(topology, "blocks");
  c.emit_every = parse_size(topology, "emit_every");
  c.emit_dims = parse_size(topology, "emit_dims");
  c.hidden = parse_size(topology, "hidden");
  c.seed = parse_size(topology, "seed");
  // Stored tensors overwrite whatever the initialiser produced.
  c.mixing_init = MixingInit::kIdentity;
  return c;
}

Matrix CouplingFlow::mixing_matrix(std::size_t block) const {
  const BlockSlots& s = slots_.at(block);
  const auto d = static_cast<Eigen::Index>(widths_[block]);
  const Matrix perm = to_matrix(tensors_[s.perm].value);
  Matrix lower = to_matrix(tensors_[s.lower].value).triangularView<Eigen::StrictlyLower>();
  lower += Matrix::Identity(d, d);
  Matrix upper = to_matrix(tensors_[s.upper].value).triangularView<Eigen::StrictlyUpper>();
  const Tensor& sign = tensors_[s.sign].value;
  const Tensor& log_scale = tensors_[s.log_scale].value;
  for (Eigen::Index i = 0; i < d; ++i) upper(i, i) = sign[static_cast<std::size_t>(i)] * std::exp(log_scale[static_cast<std::size_t>(i)]);
  return perm * lower * upper;
}

void CouplingFlow::set_mixing_matrix(std::size_t block, const Matrix& m) {
  const BlockSlots& s = slots_.at(block);
  const auto d = static_cast<Eigen::Index>(widths_[block]);
  if (m.rows() != d || m.cols() != d) throw DimensionError("set_mixing_matrix: wrong size");
  Eigen::PartialPivLU<Matrix> lu(m);
  const Matrix& packed = lu.matrixLU();
  // Eigen factors P m = L U, hence m = P^T L U.
  const Matrix perm = Matrix(lu.permutationP().transpose());
  auto& t = mutable_tensors();
  for (Eigen::Index i = 0; i < d; ++i) {
    const double diag = packed(i, i);
    if (std::abs(diag) < 1e-300) throw NumericError("set_mixing_matrix: singular matrix");
    t[s.sign].value[static_cast<std::size_t>(i)] = diag < 0.0 ? -1.0 : 1.0;
    t[s.log_scale].value[static_cast<std::size_t>(i)] = std::log(std::abs(diag));
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto k = static_cast<std::size_t>(i * d + j);
      t[s.perm].value[k] = perm(i, j);
      t[s.lower].value[k] = j < i ? packed(i, j) : 0.0;
      t[s.upper].value[k] = j > i ? packed(i, j) : 0.0;
    }
  }
}

const CouplingFlow::MixingCache& CouplingFlow::frozen_mixing() const {
  std::lock_guard lock(cache_mutex_);
  if (cache_.version == version_) return cache_;
  cache_.matrices.clear();
  cache_.log_dets.clear();
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    cache_.matrices.push_back(to_tensor(mixing_matrix(b)));
    double ld = 0.0;
    for (double v : tensors_[slots_[b].log_scale].value.values()) ld += v;
    cache_.log_dets.push_back(ld);
  }
  cache_.version = version_;
  return cache_;
}

FlowOutput CouplingFlow::record_forward(grad::Tape& tape, Var x, std::span<const Var> bound) const {
  if (bound.size() != tensors_.size()) throw ContractError("record_forward: binding does not match model");
  if (x.value().rank() != 2 || x.value().cols() != config_.dim) {
    throw DimensionError("coupling flow expects [B, " + std::to_string(config_.dim) + "] input, got " +
                         grad::shape_string(x.value().shape()));
  }
  bool trainable = false;
  for (const Var& v : bound) trainable = trainable || tape.requires_grad(v.id);
  const MixingCache* frozen = trainable ? nullptr : &frozen_mixing();

  const std::size_t rows = x.value().rows();
  Var state = x;
  Var log_det = tape.constant(Tensor({rows, 1}));
  double constant_log_det = 0.0;
  std::vector<Var> emitted;

  for (std::size_t b = 0; b < config_.blocks; ++b) {
    const BlockSlots& s = slots_[b];
    const std::size_t d = widths_[b];
    const std::size_t h = d / 2;
    const std::size_t r = d - h;

    if (frozen != nullptr) {
      state = grad::matmul(state, tape.constant(frozen->matrices[b]));
      constant_log_det += frozen->log_dets[b];
    } else {
      const Var identity = tape.constant(Tensor::identity(d));
      const Var lower = grad::add(grad::mul(bound[s.lower], tape.constant(strict_lower_mask(d))), identity);
      const Var diag_values = grad::mul(bound[s.sign], grad::exp(bound[s.log_scale]));
      const Var diag = grad::mul(grad::matmul(tape.constant(Tensor({d, 1}, 1.0)), diag_values), identity);
      const Var upper = grad::add(grad::mul(bound[s.upper], tape.constant(strict_upper_mask(d))), diag);
      const Var mixing = grad::matmul(bound[s.perm], grad::matmul(lower, upper));
      state = grad::matmul(state, mixing);
      log_det = grad::add(log_det, grad::sum(bound[s.log_scale]));
    }

    const Var xa = grad::slice(state, 0, h);
    const Var xb = grad::slice(state, h, d);
    Var hidden = grad::tanh(grad::affine(xa, bound[s.w1], bound[s.b1]));
    hidden = grad::tanh(grad::affine(hidden, bound[s.w2], bound[s.b2]));
    const Var out = grad::affine(hidden, bound[s.w3], bound[s.b3]);
    const Var log_scale = squash_log_scale(grad::slice(out, 0, r));
    const Var shift = grad::slice(out, r, 2 * r);
    const Var yb = grad::add(grad::mul(xb, grad::exp(log_scale)), shift);
    state = grad::concat({xa, yb});
    log_det = grad::add(log_det, grad::sum_rows(log_scale));

    if (emits_after(b)) {
      emitted.push_back(grad::slice(state, 0, config_.emit_dims));
      state = grad::slice(state, config_.emit_dims, d);
    }
  }
  if (constant_log_det != 0.0) {
    log_det = grad::add(log_det, tape.constant(Tensor::scalar(constant_log_det)));
  }
  emitted.push_back(state);
  const Var z = emitted.size() == 1 ? state : grad::concat(std::span<const Var>(emitted));
  return FlowOutput{z, log_det};
}

Matrix CouplingFlow::inverse(const Matrix& z) const {
  if (static_cast<std::size_t>(z.cols()) != config_.dim) throw DimensionError("coupling flow inverse: wrong width");
  const MixingCache& frozen = frozen_mixing();
  const std::vector<std::size_t> chunks = latent_chunk_sizes();
  std::vector<Matrix> emitted;
  Eigen::Index offset = 0;
  for (std::size_t c = 0; c + 1 < chunks.size(); ++c) {
    emitted.push_back(z.middleCols(offset, static_cast<Eigen::Index>(chunks[c])));
    offset += static_cast<Eigen::Index>(chunks[c]);
  }
  Matrix state = z.rightCols(static_cast<Eigen::Index>(chunks.back()));

  for (std::size_t b = config_.blocks; b-- > 0;) {
    if (emits_after(b)) {
      Matrix joined(state.rows(), state.cols() + emitted.back().cols());
      joined << emitted.back(), state;
      emitted.pop_back();
      state = std::move(joined);
    }
    const BlockSlots& s = slots_[b];
    const auto d = static_cast<Eigen::Index>(widths_[b]);
    const Eigen::Index h = d / 2;
    const Eigen::Index r = d - h;
    const Matrix xa = state.leftCols(h);
    Matrix hidden = xa * to_matrix(tensors_[s.w1].value);
    hidden.rowwise() += to_matrix(tensors_[s.b1].value).row(0);
    hidden = hidden.array().tanh().matrix();
    Matrix hidden2 = hidden * to_matrix(tensors_[s.w2].value);
    hidden2.rowwise() += to_matrix(tensors_[s.b2].value).row(0);
    hidden2 = hidden2.array().tanh().matrix();
    Matrix out = hidden2 * to_matrix(tensors_[s.w3].value);
    out.rowwise() += to_matrix(tensors_[s.b3].value).row(0);
    const Matrix log_scale = (out.leftCols(r).array() / kLogScaleBound).tanh().matrix() * kLogScaleBound;
    const Matrix shift = out.rightCols(r);
    state.rightCols(r) = ((state.rightCols(r) - shift).array() * (-log_scale.array()).exp()).matrix();

    const Matrix mixing = to_matrix(frozen.matrices[b]);
    Eigen::PartialPivLU<Matrix> lu(mixing);
    if (!(std::abs(lu.determinant()) > 1e-12)) throw NumericError("1x1 mixing of block " + std::to_string(b) + " is singular");
    state = state * lu.inverse();
  }
  return state;
}

}  // namespace se::flow
