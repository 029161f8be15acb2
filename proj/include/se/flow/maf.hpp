#pragma once

#include <cstdint>

#include "se/flow/flow.hpp"

namespace se::flow {

struct MafConfig {
  std::size_t dim = 2;
  std::size_t blocks = 5;
  std::size_t hidden = 64;
  std::uint64_t seed = 0;
  /// Reverse the dimension order between consecutive blocks.
  bool reverse_between_blocks = true;
};

/// Masked autoregressive flow. Each block is a MADE network (two tanh
/// hidden layers) producing a shift mu_i and log-scale a_i for dimension i
/// from dimensions < i only; z_i = (x_i - mu_i) exp(-a_i). The last layer
/// starts at zero, so a fresh model is the identity.
class MafFlow final : public Flow {
 public:
  explicit MafFlow(const MafConfig& config);

  std::string kind() const override { return "maf-flow"; }
  std::size_t dim() const override { return config_.dim; }
  std::map<std::string, std::string> topology() const override;
  std::unique_ptr<Flow> clone() const override { return std::make_unique<MafFlow>(*this); }

  FlowOutput record_forward(grad::Tape& tape, grad::Var x, std::span<const grad::Var> bound) const override;
  Matrix inverse(const Matrix& z) const override;

  const MafConfig& config() const { return config_; }

  /// Output connectivity mask of a block's last layer, [hidden, 2 * dim].
  grad::Tensor& output_mask(std::size_t block);

  /// Probes every block's conditioner at `probe` with reverse-mode
  /// gradients and throws ContractError if any shift or log-scale output
  /// for dimension i responds to an input dimension >= i.
  void check_autoregressive(std::span<const double> probe) const;

  static MafConfig config_from_topology(const std::map<std::string, std::string>& topology);

 private:
  struct BlockSlots {
    std::size_t w1, b1, w2, b2, w3, b3;
    std::size_t m1, m2, m3;
  };

  // Shift and log-scale outputs [B, 2D] of a block's conditioner.
  grad::Var record_conditioner(grad::Tape& tape, grad::Var x, std::span<const grad::Var> bound, const BlockSlots& s) const;
  Matrix conditioner(const Matrix& x, const BlockSlots& s) const;
  bool reverses_after(std::size_t block) const;

  MafConfig config_;
  std::vector<BlockSlots> slots_;
  std::size_t reversal_slot_ = 0;
};

/// Masked autoregressive flow with the given topology; dim must be >= 1.
MafFlow build_maf(std::size_t dim, std::size_t blocks, std::size_t hidden, std::uint64_t seed = 0);

}  // namespace se::flow
