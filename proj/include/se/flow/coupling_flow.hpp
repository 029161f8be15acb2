#pragma once

#include <cstdint>
#include <mutex>

#include "se/flow/flow.hpp"

namespace se::flow {

enum class MixingInit { kRandomRotation, kIdentity };

/// Topology of the multi-scale coupling flow. With the defaults: 80-sample
/// windows, 12 blocks, 20 latent dimensions emitted after blocks 4 and 8 and
/// the remaining 40 after block 12.
struct CouplingFlowConfig {
  std::size_t dim = 80;
  std::size_t blocks = 12;
  std::size_t emit_every = 4;
  std::size_t emit_dims = 20;
  std::size_t hidden = 64;
  MixingInit mixing_init = MixingInit::kRandomRotation;
  std::uint64_t seed = 0;
};

/// Stack of blocks, each an invertible 1x1 mixing followed by an affine
/// coupling layer, with latent dimensions split off at fixed depths.
///
/// Mixing acts on row vectors, x -> x M with M = P L (U + diag(sign * exp(s))),
/// P a fixed permutation, L unit lower triangular, U strictly upper
/// triangular; log|det M| = sum(s). The coupling layer keeps the first half
/// of the state and maps the second half to xb * exp(s) + t, where (s, t)
/// come from a tanh MLP (two hidden layers) of the first half. The last
/// conditioner layer starts at zero so a fresh coupling is the identity.
class CouplingFlow final : public Flow {
 public:
  explicit CouplingFlow(const CouplingFlowConfig& config);
  CouplingFlow(const CouplingFlow& other);

  std::string kind() const override { return "coupling-flow"; }
  std::size_t dim() const override { return config_.dim; }
  std::map<std::string, std::string> topology() const override;
  std::unique_ptr<Flow> clone() const override { return std::make_unique<CouplingFlow>(*this); }

  FlowOutput record_forward(grad::Tape& tape, grad::Var x, std::span<const grad::Var> bound) const override;
  Matrix inverse(const Matrix& z) const override;

  const CouplingFlowConfig& config() const { return config_; }
  /// Sizes of the emitted latent chunks in z order, e.g. {20, 20, 40}.
  std::vector<std::size_t> latent_chunk_sizes() const;
  /// State width entering each block.
  std::size_t block_width(std::size_t block) const { return widths_.at(block); }

  /// Mixing matrix of a block as currently parameterised.
  Matrix mixing_matrix(std::size_t block) const;
  /// Re-parameterises a block's mixing from an explicit invertible matrix.
  void set_mixing_matrix(std::size_t block, const Matrix& m);

  static CouplingFlowConfig config_from_topology(const std::map<std::string, std::string>& topology);

 private:
  struct BlockSlots {
    std::size_t perm, sign, lower, upper, log_scale;
    std::size_t w1, b1, w2, b2, w3, b3;
  };
  struct MixingCache {
    std::uint64_t version = ~std::uint64_t{0};
    std::vector<grad::Tensor> matrices;
    std::vector<double> log_dets;
  };

  bool emits_after(std::size_t block) const;
  const MixingCache& frozen_mixing() const;

  CouplingFlowConfig config_;
  std::vector<std::size_t> widths_;
  std::vector<BlockSlots> slots_;
  mutable std::mutex cache_mutex_;
  mutable MixingCache cache_;
};

}  // namespace se::flow
