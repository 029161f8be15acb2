#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "se/errors.hpp"
#include "se/flow/flow.hpp"
#include "se/optim/adam.hpp"

namespace se::flow {

struct TrainConfig {
  std::size_t batch_size = 4;
  double learning_rate = 1e-4;
  std::int64_t max_steps = 1000;
  std::uint64_t seed = 0;
  /// Written every `checkpoint_every` steps (0: only at the end) and on divergence.
  std::optional<std::filesystem::path> checkpoint_path;
  std::int64_t checkpoint_every = 0;
  /// Use the whole dataset as one batch each step (batch_size ignored).
  bool full_batch = false;
};

struct TrainResult {
  /// Mean negative log-likelihood of the batch at each step taken in this run.
  std::vector<double> losses;
  /// Global step counter after the run (continues across resumes).
  std::int64_t step = 0;
};

/// Training stopped on a non-finite loss; the last finite state was
/// checkpointed when a checkpoint path was configured.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(std::int64_t step, const std::string& detail);
  std::int64_t step;
};

/// Maximum-likelihood training state: the model, its Adam moments and the
/// global step. Batches are drawn from an RNG seeded by (seed, step), so a
/// run resumed from a checkpoint continues exactly as an uninterrupted one.
class MlTrainer {
 public:
  MlTrainer(std::unique_ptr<Flow> model, const TrainConfig& config);

  /// Restores model, optimizer moments and step counter from a checkpoint.
  static MlTrainer resume(const std::filesystem::path& checkpoint, const TrainConfig& config);

  /// Runs until the global step reaches config.max_steps. `on_step` sees
  /// (step, loss) after each update.
  TrainResult run(const Matrix& dataset, const std::function<void(std::int64_t, double)>& on_step = {});

  void save_checkpoint(const std::filesystem::path& path) const;

  Flow& model() { return *model_; }
  const Flow& model() const { return *model_; }
  std::unique_ptr<Flow> release_model() { return std::move(model_); }
  std::int64_t step() const { return step_; }

 private:
  std::unique_ptr<Flow> model_;
  TrainConfig config_;
  optim::Adam adam_;
  std::int64_t step_ = 0;
};

/// Convenience wrapper: trains `model` in place and returns the loss curve.
TrainResult train_ml(Flow& model, const Matrix& dataset, const TrainConfig& config);

}  // namespace se::flow
