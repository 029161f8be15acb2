#include "se/flow/train.hpp"

#include <cmath>
#include <random>

namespace se::flow {

namespace {

std::vector<const grad::Tensor*> const_view(const std::vector<grad::Tensor*>& params) {
  return std::vector<const grad::Tensor*>(params.begin(), params.end());
}

std::mt19937_64 step_rng(std::uint64_t seed, std::int64_t step) {
  const auto s = static_cast<std::uint64_t>(step);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

TrainingDiverged::TrainingDiverged(std::int64_t at_step, const std::string& detail)
    : NumericError("training diverged at step " + std::to_string(at_step) + ": " + detail), step(at_step) {}

MlTrainer::MlTrainer(std::unique_ptr<Flow> model, const TrainConfig& config)
    : model_(std::move(model)),
      config_(config),
      adam_(optim::AdamConfig{config.learning_rate}, const_view(model_->trainable_parameters())) {
  if (config_.batch_size == 0) throw ContractError("batch size must be >= 1");
  if (!(config_.learning_rate > 0.0)) throw ContractError("learning rate must be > 0");
}

MlTrainer MlTrainer::resume(const std::filesystem::path& checkpoint, const TrainConfig& config) {
  const io::Container c = io::read_container(checkpoint);
  MlTrainer trainer(from_container(c), config);
  trainer.step_ = std::stoll(c.attr("step"));
  trainer.adam_.set_steps(std::stoll(c.attr("adam_steps")));
  std::size_t k = 0;
  for (const auto& t : trainer.model_->tensors()) {
    if (!t.trainable) continue;
    trainer.adam_.first_moments()[k] = c.tensor("adam.m/" + t.name);
    trainer.adam_.second_moments()[k] = c.tensor("adam.v/" + t.name);
    ++k;
  }
  return trainer;
}

void MlTrainer::save_checkpoint(const std::filesystem::path& path) const {
  io::Container c = to_container(*model_, {{"step", std::to_string(step_)},
                                           {"adam_steps", std::to_string(adam_.steps())},
                                           {"seed", std::to_string(config_.seed)},
                                           {"batch_size", std::to_string(config_.batch_size)}});
  std::size_t k = 0;
  for (const auto& t : model_->tensors()) {
    if (!t.trainable) continue;
    c.tensors.emplace_back("adam.m/" + t.name, adam_.first_moments()[k]);
    c.tensors.emplace_back("adam.v/" + t.name, adam_.second_moments()[k]);
    ++k;
  }
  io::write_container(path, c);
}

TrainResult MlTrainer::run(const Matrix& dataset, const std::function<void(std::int64_t, double)>& on_step) {
  if (dataset.rows() == 0) throw ContractError("train_ml: empty dataset");
  if (static_cast<std::size_t>(dataset.cols()) != model_->dim()) {
    throw DimensionError("train_ml: dataset width " + std::to_string(dataset.cols()) + " vs model dim " +
                         std::to_string(model_->dim()));
  }
  TrainResult result;
  const auto n = static_cast<std::size_t>(dataset.rows());
  const std::size_t batch = config_.full_batch ? n : config_.batch_size;
  Matrix x(static_cast<Eigen::Index>(batch), dataset.cols());

  while (step_ < config_.max_steps) {
    if (config_.full_batch) {
      x = dataset;
    } else {
      std::mt19937_64 rng = step_rng(config_.seed, step_);
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t i = 0; i < batch; ++i) x.row(static_cast<Eigen::Index>(i)) = dataset.row(static_cast<Eigen::Index>(pick(rng)));
    }

    double loss = 0.0;
    grad::Gradients grads;
    std::vector<grad::Var> bound;
    grad::Tape tape;
    try {
      bound = model_->bind(tape, true);
      const grad::Var ll = record_log_likelihood(*model_, tape, tape.constant(to_tensor(x)), bound);
      const grad::Var objective = grad::scale(grad::mean(ll), -1.0);
      loss = objective.value().item();
      grads = tape.backward(objective);
    } catch (const NumericError& e) {
      if (config_.checkpoint_path) save_checkpoint(*config_.checkpoint_path);
      throw TrainingDiverged(step_, e.what());
    }
    if (!std::isfinite(loss)) {
      if (config_.checkpoint_path) save_checkpoint(*config_.checkpoint_path);
      throw TrainingDiverged(step_, "non-finite loss");
    }

    std::vector<grad::Tensor*> params = model_->trainable_parameters();
    std::vector<const grad::Tensor*> g;
    g.reserve(params.size());
    const auto& tensors = model_->tensors();
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      if (tensors[k].trainable) g.push_back(&grads.wrt(bound[k]));
    }
    adam_.step(params, g);
    ++step_;
    result.losses.push_back(loss);
    if (on_step) on_step(step_, loss);
    if (config_.checkpoint_path && config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0) {
      save_checkpoint(*config_.checkpoint_path);
    }
  }
  if (config_.checkpoint_path) save_checkpoint(*config_.checkpoint_path);
  result.step = step_;
  return result;
}

TrainResult train_ml(Flow& model, const Matrix& dataset, const TrainConfig& config) {
  MlTrainer trainer(model.clone(), config);
  TrainResult result = trainer.run(dataset);
  auto& target = model.mutable_tensors();
  const auto& trained = trainer.model().tensors();
  for (std::size_t k = 0; k < target.size(); ++k) target[k].value = trained[k].value;
  return result;
}

}  // namespace se::flow
