#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ecnet/corpus.hpp"
#include "ecnet/embeddings.hpp"

namespace ecnet {

struct SyntheticOptions {
  std::size_t train_sentences = 300;
  std::size_t dev_sentences = 60;
  std::size_t min_length = 5;
  std::size_t max_length = 12;
  std::size_t word_dim = 16;
  std::uint64_t seed = 7;
};

/// Toy NER data with two types. Entity words come from a dedicated stem list;
/// PER mentions are Title-case, ORG mentions all-caps, and everything else is
/// lowercase filler or punctuation. The word vectors cover the lowercase
/// forms only, so cased entity tokens fall back to the unknown vector and
/// their type is visible through surface pattern alone. Same-type mentions
/// are never adjacent and every sentence holds at least one entity and one
/// non-entity token.
struct SyntheticCorpus {
  LabelSet labels;  // PER = 1, ORG = 2
  std::vector<Sentence> train;
  std::vector<Sentence> dev;
  WordTable vectors;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options = {});

/// Writes train.conll, dev.conll and vectors.txt into `dir`.
void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace ecnet
