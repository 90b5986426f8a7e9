#include "ecnet/model.hpp"

#include <random>
#include <stdexcept>

namespace ecnet {

EcNet::EcNet(ModelConfig cfg, std::shared_ptr<const WordTable> words)
    : cfg_(std::move(cfg)), labels_(cfg_.classes), words_(std::move(words)) {
  cfg_.validate();
  if (!words_) throw std::invalid_argument("model needs a word table");
  if (cfg_.d_w != 0 && cfg_.d_w != words_->dim()) {
    throw std::invalid_argument("config d_w=" + std::to_string(cfg_.d_w) +
                                " but word vectors have dimension " + std::to_string(words_->dim()));
  }
  cfg_.d_w = words_->dim();
  labels_.freeze();

  std::mt19937_64 rng(cfg_.seed);
  Tensor pattern_table;
  if (cfg_.use_pattern_embedding) {
    pattern_table = params_.add("embed.pattern", {kPatternCount, cfg_.d_p}, Init::kGlorot, rng);
  }
  embedder_ = std::make_unique<Embedder>(words_, pattern_table, cfg_.use_pattern_embedding);
  encoder_ = std::make_unique<Encoder>(params_, cfg_.encoder, embedder_->output_dim(), rng);
  heads_ = std::make_unique<DetectHeads>(params_, cfg_.encoder.d_model, cfg_.classes.size(),
                                         cfg_.head_kernel, cfg_.head_relu, rng);
  round_parameters();
}

HeadOutput EcNet::forward(const Batch& batch, std::span<const Sentence> sentences,
                          const ForwardContext& ctx) const {
  Tensor emb = embedder_->embed(batch, sentences);
  Tensor h = encoder_->forward(emb, batch.mask, ctx);
  return heads_->forward(h);
}

std::vector<PositionTarget> EcNet::batch_targets(const Batch& batch,
                                                 std::span<const Sentence> sentences) {
  std::vector<PositionTarget> targets(batch.size() * batch.length);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto t = targets_from_spans(sentences[batch.sentence_ids[b]]);
    std::copy(t.begin(), t.end(), targets.begin() + static_cast<std::ptrdiff_t>(b * batch.length));
  }
  return targets;
}

std::vector<SentenceOutput> EcNet::run(std::span<const Sentence> sentences,
                                       std::size_t batch_size) const {
  std::vector<SentenceOutput> outputs(sentences.size());
  if (sentences.empty()) return outputs;
  const ForwardContext ctx{};
  for (const auto& batch : make_batches(sentences, batch_size, 0, /*shuffle=*/false)) {
    const HeadOutput out = forward(batch, sentences, ctx);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const std::size_t id = batch.sentence_ids[b];
      outputs[id].candidates = out.candidates(b, sentences[id].size());
      outputs[id].gold = sentences[id].gold_spans;
    }
  }
  return outputs;
}

void EcNet::round_parameters() {
  if (cfg_.precision != Precision::kFloat32) return;
  for (auto& e : params_.entries()) {
    for (auto& v : e.value.mutable_data()) v = static_cast<double>(static_cast<float>(v));
  }
}

std::vector<std::vector<EntitySpan>> decode_all(std::span<const SentenceOutput> outputs,
                                                double threshold) {
  std::vector<std::vector<EntitySpan>> spans;
  spans.reserve(outputs.size());
  for (const auto& o : outputs) spans.push_back(decode(o.candidates, o.candidates.size(), threshold));
  return spans;
}

Prf evaluate(const EcNet& model, std::span<const Sentence> sentences, double threshold,
             PrfCounts* counts) {
  const auto outputs = model.run(sentences);
  PrfCounts total;
  for (const auto& o : outputs) {
    total += count_matches(decode(o.candidates, o.candidates.size(), threshold), o.gold);
  }
  if (counts) *counts = total;
  return score(total);
}

}  // namespace ecnet
