#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ecnet/config.hpp"
#include "ecnet/corpus.hpp"
#include "ecnet/decoder.hpp"
#include "ecnet/embeddings.hpp"
#include "ecnet/encoder.hpp"
#include "ecnet/heads.hpp"
#include "ecnet/parameters.hpp"

namespace ecnet {

/// The full detector: embeddings, encoder and detection heads.
class EcNet {
 public:
  /// Parameters are initialised from cfg.seed. cfg.classes fixes the label
  /// order; d_w must match the word table when set.
  EcNet(ModelConfig cfg, std::shared_ptr<const WordTable> words);

  EcNet(const EcNet&) = delete;
  EcNet& operator=(const EcNet&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const LabelSet& labels() const { return labels_; }
  const WordTable& words() const { return embedder_->words(); }
  std::shared_ptr<const WordTable> word_table() const { return words_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const Embedder& embedder() const { return *embedder_; }
  const Encoder& encoder() const { return *encoder_; }
  const DetectHeads& heads() const { return *heads_; }

  HeadOutput forward(const Batch& batch, std::span<const Sentence> sentences,
                     const ForwardContext& ctx) const;

  /// Per-position targets for a padded batch; padding rows are non-entity.
  static std::vector<PositionTarget> batch_targets(const Batch& batch,
                                                   std::span<const Sentence> sentences);

  /// Evaluation-mode candidates for every sentence, in order.
  std::vector<SentenceOutput> run(std::span<const Sentence> sentences,
                                  std::size_t batch_size = 32) const;

  /// Rounds every parameter to the configured storage precision.
  void round_parameters();

 private:
  ModelConfig cfg_;
  LabelSet labels_;
  std::shared_ptr<const WordTable> words_;
  ParameterSet params_;
  std::unique_ptr<Embedder> embedder_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<DetectHeads> heads_;
};

/// Decoded spans per sentence.
std::vector<std::vector<EntitySpan>> decode_all(std::span<const SentenceOutput> outputs,
                                                double threshold);
/// Corpus-level span scores at one threshold.
Prf evaluate(const EcNet& model, std::span<const Sentence> sentences, double threshold,
             PrfCounts* counts = nullptr);

}  // namespace ecnet
