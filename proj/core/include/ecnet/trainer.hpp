#pragma once

#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ecnet/checkpoint.hpp"
#include "ecnet/config.hpp"
#include "ecnet/decoder.hpp"
#include "ecnet/model.hpp"

namespace ecnet {

/// lr * decay^floor(epoch / decay_every), epochs counted from 0.
double learning_rate(const OptimizerConfig& cfg, std::size_t epoch);

/// Adam with decoupled weight decay:
///   p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
class Adam {
 public:
  explicit Adam(const OptimizerConfig& cfg) : cfg_(cfg) {}
  /// Updates every parameter that holds a gradient. Parameters without one
  /// are left untouched.
  void step(ParameterSet& params, double lr);
  std::size_t steps() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochLog {
  std::size_t epoch = 0;  // 0-based
  double lr = 0;
  double mean_loss = 0;
  std::optional<Prf> dev;
};

struct TrainResult {
  Checkpoint best;        // best dev F1 (or the last epoch without dev data)
  Checkpoint last;
  std::size_t best_epoch = 0;
  double best_dev_f1 = -1;
  std::vector<EpochLog> log;
};

struct TrainOptions {
  std::function<void(const EpochLog&)> on_epoch;
};

/// One optimisation step on a batch; returns the loss value. Gradients are
/// cleared before and after.
double train_step(EcNet& model, Adam& adam, const Batch& batch,
                  std::span<const Sentence> sentences, double lr, std::mt19937_64& rng);

/// Runs model.config().optim.max_epochs epochs of shuffled mini-batches.
/// `train` is used as given (filter it beforehand). Dev F1 at
/// select_threshold is measured every eval_every epochs and after the final
/// epoch; the best one is kept (earliest wins ties).
TrainResult train(EcNet& model, std::span<const Sentence> train, std::span<const Sentence> dev,
                  const TrainOptions& options = {});

}  // namespace ecnet
