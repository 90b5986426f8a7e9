#include "ecnet/trainer.hpp"

#include <cmath>
#include <sstream>

#include "ecnet/loss.hpp"

namespace ecnet {

double learning_rate(const OptimizerConfig& cfg, std::size_t epoch) {
  const auto drops = static_cast<double>(epoch / cfg.lr_decay_every);
  return cfg.lr * std::pow(cfg.lr_decay, drops);
}

void Adam::step(ParameterSet& params, double lr) {
  auto& entries = params.entries();
  if (m_.empty()) {
    for (const auto& e : entries) {
      m_.emplace_back(e.value.numel(), 0.0);
      v_.emplace_back(e.value.numel(), 0.0);
    }
  }
  if (m_.size() != entries.size()) throw std::logic_error("Adam: parameter set changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor& p = entries[i].value;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[j]);
    }
  }
}

double train_step(EcNet& model, Adam& adam, const Batch& batch,
                  std::span<const Sentence> sentences, double lr, std::mt19937_64& rng) {
  model.params().zero_grad();
  const ForwardContext ctx{true, &rng};
  const HeadOutput out = model.forward(batch, sentences, ctx);
  const auto targets = EcNet::batch_targets(batch, sentences);
  Tensor loss = entity_loss(out, targets, batch.mask, model.config().loss);
  const double value = loss.item();
  if (!std::isfinite(value)) throw TrainingDiverged("entity loss became non-finite");
  loss.backward();
  adam.step(model.params(), lr);
  model.round_parameters();
  model.params().zero_grad();
  // A NaN parameter can hide behind a ReLU and leave the loss finite.
  for (const auto& p : model.params().entries()) {
    for (double v : p.value.data()) {
      if (!std::isfinite(v)) throw TrainingDiverged("parameter " + p.name + " became non-finite");
    }
  }
  return value;
}

namespace {

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

TrainResult train(EcNet& model, std::span<const Sentence> train_set, std::span<const Sentence> dev,
                  const TrainOptions& options) {
  if (train_set.empty()) throw std::invalid_argument("training corpus is empty");
  const ModelConfig& cfg = model.config();
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  Adam adam(cfg.optim);
  TrainResult result;

  const std::size_t epochs = cfg.optim.max_epochs;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const double lr = learning_rate(cfg.optim, epoch);
    const auto batches = make_batches(train_set, cfg.optim.batch_size, rng());
    double loss_sum = 0;
    for (const auto& batch : batches) loss_sum += train_step(model, adam, batch, train_set, lr, rng);

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.mean_loss = loss_sum / static_cast<double>(batches.size());
    const bool last = epoch + 1 == epochs;
    if (!dev.empty() && cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || last)) {
      log.dev = evaluate(model, dev, cfg.select_threshold);
      if (log.dev->f1 > result.best_dev_f1) {
        result.best_dev_f1 = log.dev->f1;
        result.best_epoch = epoch;
        result.best = snapshot(model, epoch + 1, rng_text(rng));
      }
    }
    if (options.on_epoch) options.on_epoch(log);
    result.log.push_back(log);
  }
  result.last = snapshot(model, epochs, rng_text(rng));
  if (result.best_dev_f1 < 0) {
    result.best = result.last;
    result.best_epoch = epochs ? epochs - 1 : 0;
  }
  return result;
}

}  // namespace ecnet
