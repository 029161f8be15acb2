#include "se/flow/maf.hpp"

#include <cmath>
#include <random>

#include "se/errors.hpp"

namespace se::flow {

namespace {

using grad::Tensor;
using grad::Var;

std::size_t parse_size(const std::map<std::string, std::string>& topology, const std::string& key) {
  auto it = topology.find(key);
  if (it == topology.end()) throw DataError("maf-flow topology lacks '" + key + "'");
  return static_cast<std::size_t>(std::stoull(it->second));
}

Tensor gaussian(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Tensor t({rows, cols});
  for (double& v : t.values()) v = normal(rng);
  return t;
}

Tensor reversal(std::size_t d) {
  Tensor p({d, d});
  for (std::size_t i = 0; i < d; ++i) p.at(i, d - 1 - i) = 1.0;
  return p;
}

Matrix masked(const Tensor& w, const Tensor& m) {
  Matrix out = to_matrix(w);
  out.array() *= to_matrix(m).array();
  return out;
}

}  // namespace

MafFlow::MafFlow(const MafConfig& config) : config_(config) {
  const std::size_t d = config_.dim;
  const std::size_t hid = config_.hidden;
  if (d == 0) throw ContractError("MAF needs dim >= 1");
  if (config_.blocks == 0) throw ContractError("MAF needs at least one block");
  if (hid == 0) throw ContractError("MAF needs a hidden width");

  // MADE degrees: inputs 1..D, hidden units cycle through 1..D-1, output
  // unit for dimension i has degree i. A hidden unit may see inputs with
  // degree <= its own; an output may see hidden units of strictly lower degree.
  std::vector<std::size_t> hidden_degree(hid);
  for (std::size_t k = 0; k < hid; ++k) hidden_degree[k] = d > 1 ? 1 + k % (d - 1) : d;
  Tensor m1({d, hid});
  Tensor m2({hid, hid});
  Tensor m3({hid, 2 * d});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < hid; ++k) m1.at(i, k) = hidden_degree[k] >= i + 1 ? 1.0 : 0.0;
  for (std::size_t j = 0; j < hid; ++j)
    for (std::size_t k = 0; k < hid; ++k) m2.at(j, k) = hidden_degree[k] >= hidden_degree[j] ? 1.0 : 0.0;
  for (std::size_t k = 0; k < hid; ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      const double allowed = i + 1 > hidden_degree[k] ? 1.0 : 0.0;
      m3.at(k, i) = allowed;
      m3.at(k, d + i) = allowed;
    }
  }

  std::mt19937_64 rng(config_.seed);
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    BlockSlots s{};
    s.w1 = add_tensor(p + "made.w1", gaussian(d, hid, 1.0 / std::sqrt(static_cast<double>(d)), rng), true);
    s.b1 = add_tensor(p + "made.b1", Tensor({1, hid}), true);
    s.w2 = add_tensor(p + "made.w2", gaussian(hid, hid, 1.0 / std::sqrt(static_cast<double>(hid)), rng), true);
    s.b2 = add_tensor(p + "made.b2", Tensor({1, hid}), true);
    s.w3 = add_tensor(p + "made.w3", Tensor({hid, 2 * d}), true);
    s.b3 = add_tensor(p + "made.b3", Tensor({1, 2 * d}), true);
    s.m1 = add_tensor(p + "made.mask1", m1, false);
    s.m2 = add_tensor(p + "made.mask2", m2, false);
    s.m3 = add_tensor(p + "made.mask3", m3, false);
    slots_.push_back(s);
  }
  reversal_slot_ = add_tensor("reversal", reversal(d), false);
}

MafFlow build_maf(std::size_t dim, std::size_t blocks, std::size_t hidden, std::uint64_t seed) {
  MafConfig config;
  config.dim = dim;
  config.blocks = blocks;
  config.hidden = hidden;
  config.seed = seed;
  return MafFlow(config);
}

std::map<std::string, std::string> MafFlow::topology() const {
  return {{"dim", std::to_string(config_.dim)},
          {"blocks", std::to_string(config_.blocks)},
          {"hidden", std::to_string(config_.hidden)},
          {"seed", std::to_string(config_.seed)},
          {"reverse_between_blocks", config_.reverse_between_blocks ? "1" : "0"}};
}

MafConfig MafFlow::config_from_topology(const std::map<std::string, std::string>& topology) {
  MafConfig c;
  c.dim = parse_size(topology, "dim");
  c.blocks = parse_size(topology, "blocks");
  c.hidden = parse_size(topology, "hidden");
  c.seed = parse_size(topology, "seed");
  c.reverse_between_blocks = parse_size(topology, "reverse_between_blocks") != 0;
  return c;
}

grad::Tensor& MafFlow::output_mask(std::size_t block) {
  return mutable_tensors()[slots_.at(block).m3].value;
}

bool MafFlow::reverses_after(std::size_t block) const {
  return config_.reverse_between_blocks && config_.dim > 1 && block + 1 < config_.blocks;
}

Var MafFlow::record_conditioner(grad::Tape&, Var x, std::span<const Var> bound, const BlockSlots& s) const {
  Var h = grad::tanh(grad::affine(x, grad::mul(bound[s.w1], bound[s.m1]), bound[s.b1]));
  h = grad::tanh(grad::affine(h, grad::mul(bound[s.w2], bound[s.m2]), bound[s.b2]));
  return grad::affine(h, grad::mul(bound[s.w3], bound[s.m3]), bound[s.b3]);
}

Matrix MafFlow::conditioner(const Matrix& x, const BlockSlots& s) const {
  Matrix h = x * masked(tensors_[s.w1].value, tensors_[s.m1].value);
  h.rowwise() += to_matrix(tensors_[s.b1].value).row(0);
  h = h.array().tanh().matrix();
  Matrix h2 = h * masked(tensors_[s.w2].value, tensors_[s.m2].value);
  h2.rowwise() += to_matrix(tensors_[s.b2].value).row(0);
  h2 = h2.array().tanh().matrix();
  Matrix out = h2 * masked(tensors_[s.w3].value, tensors_[s.m3].value);
  out.rowwise() += to_matrix(tensors_[s.b3].value).row(0);
  return out;
}

FlowOutput MafFlow::record_forward(grad::Tape& tape, Var x, std::span<const Var> bound) const {
  if (bound.size() != tensors_.size()) throw ContractError("record_forward: binding does not match model");
  const std::size_t d = config_.dim;
  if (x.value().rank() != 2 || x.value().cols() != d) {
    throw DimensionError("MAF expects [B, " + std::to_string(d) + "] input, got " + grad::shape_string(x.value().shape()));
  }
  Var state = x;
  Var log_det = tape.constant(Tensor({x.value().rows(), 1}));
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    const BlockSlots& s = slots_[b];
    const Var out = record_conditioner(tape, state, bound, s);
    const Var shift = grad::slice(out, 0, d);
    const Var log_scale = grad::scale(grad::tanh(grad::scale(grad::slice(out, d, 2 * d), 1.0 / kLogScaleBound)), kLogScaleBound);
    state = grad::mul(grad::sub(state, shift), grad::exp(grad::scale(log_scale, -1.0)));
    log_det = grad::sub(log_det, grad::sum_rows(log_scale));
    if (reverses_after(b)) state = grad::matmul(state, bound[reversal_slot_]);
  }
  return FlowOutput{state, log_det};
}

Matrix MafFlow::inverse(const Matrix& z) const {
  const auto d = static_cast<Eigen::Index>(config_.dim);
  if (z.cols() != d) throw DimensionError("MAF inverse: wrong width");
  Matrix state = z;
  for (std::size_t b = config_.blocks; b-- > 0;) {
    if (reverses_after(b)) state = state.rowwise().reverse().eval();
    const BlockSlots& s = slots_[b];
    Matrix x = Matrix::Zero(state.rows(), d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const Matrix out = conditioner(x, s);
      for (Eigen::Index r = 0; r < state.rows(); ++r) {
        const double log_scale = kLogScaleBound * std::tanh(out(r, d + i) / kLogScaleBound);
        x(r, i) = state(r, i) * std::exp(log_scale) + out(r, i);
      }
    }
    state = std::move(x);
  }
  return state;
}

void MafFlow::check_autoregressive(std::span<const double> probe) const {
  const std::size_t d = config_.dim;
  if (probe.size() != d) throw DimensionError("check_autoregressive: probe has wrong size");
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    // Structural paths through the masks catch violations that zero weights would hide from the probe.
    const BlockSlots& s = slots_[b];
    const Matrix paths = to_matrix(tensors_[s.m1].value).cwiseAbs() * to_matrix(tensors_[s.m2].value).cwiseAbs() *
                         to_matrix(tensors_[s.m3].value).cwiseAbs();
    for (std::size_t j = 0; j < 2 * d; ++j) {
      for (std::size_t i = j % d; i < d; ++i) {
        if (paths(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0.0) {
          throw ContractError("MAF block " + std::to_string(b) + ": mask connects input dimension " + std::to_string(i) +
                              " to output for dimension " + std::to_string(j % d));
        }
      }
    }
    for (std::size_t j = 0; j < 2 * d; ++j) {
      grad::Tape tape;
      const auto bound = bind(tape, false);
      const Var x = tape.variable(Tensor::matrix(1, d, std::vector<double>(probe.begin(), probe.end())));
      const Var out = record_conditioner(tape, x, bound, slots_[b]);
      const Var picked = grad::sum(grad::slice(out, j, j + 1));
      const grad::Gradients grads = tape.backward(picked);
      const Tensor& g = grads.wrt(x);
      const std::size_t dim_index = j % d;
      for (std::size_t i = dim_index; i < d; ++i) {
        if (g[i] != 0.0) {
          throw ContractError("MAF block " + std::to_string(b) + ": output for dimension " + std::to_string(dim_index) +
                              " depends on input dimension " + std::to_string(i));
        }
      }
    }
  }
}

}  // namespace se::flow
