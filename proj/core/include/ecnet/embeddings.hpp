#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ecnet/corpus.hpp"
#include "ecnet/tensor.hpp"

namespace ecnet {

/// Surface-form classes of a word. Values double as pattern-table rows.
enum class PatternId : std::size_t {
  kUpper = 0,            // "ABCDE"
  kLower = 1,            // "abcde"
  kTitle = 2,            // "Abcde"
  kMixed = 3,            // "aBCDE", "AbCDe"
  kUpperSymbol = 4,      // "ABCDE12#"
  kLowerSymbol = 5,      // "abcde12#"
  kTitleSymbol = 6,      // "Abcde12#"
  kMixedSymbol = 7,      // "AbCDe12#"
  kSymbolOnly = 8,       // "12#^"
  kOther = 9,            // anything else (e.g. caseless scripts)
};

inline constexpr std::size_t kPatternCount = 10;

std::string_view pattern_name(PatternId id);

/// Total classification of a non-empty UTF-8 word; first matching rule wins.
/// Cased letters are split by Unicode case; digits, punctuation and symbols
/// form the second character group. A word containing any other character
/// (caseless letters, whitespace, invalid UTF-8) is kOther.
/// Throws std::invalid_argument on the empty string.
PatternId classify_pattern(std::string_view word);

/// Frozen word -> vector lookup with a mean-vector fallback.
class WordTable {
 public:
  WordTable() = default;
  WordTable(std::size_t dim, std::vector<std::string> words, std::vector<double> vectors);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  bool contains(const std::string& word) const { return index_.count(word) != 0; }
  /// Vector of `word`, or the unknown-word vector if absent.
  std::span<const double> lookup(const std::string& word) const;
  std::span<const double> unk_vector() const { return unk_; }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::vector<double> vectors_;  // [size x dim]
  std::vector<double> unk_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Text vectors: one "word v1 ... vd" entry per line, optional "count dim"
/// header line. The unknown vector is the mean of all entries.
WordTable load_pretrained(std::istream& in);
WordTable load_pretrained(const std::filesystem::path& path);
void save_pretrained(std::ostream& out, const WordTable& table);

/// Builds per-token inputs: frozen word vector concatenated with a trainable
/// pattern embedding row.
class Embedder {
 public:
  /// pattern_table must be [kPatternCount x d_p] when `use_pattern` is set.
  Embedder(std::shared_ptr<const WordTable> words, Tensor pattern_table, bool use_pattern);

  std::size_t output_dim() const;
  const WordTable& words() const { return *words_; }
  const Tensor& pattern_table() const { return pattern_table_; }
  bool use_pattern() const { return use_pattern_; }

  /// [n x (d_w + d_p)] for one sentence.
  Tensor embed(std::span<const std::string> tokens) const;
  /// [B x T x (d_w + d_p)]; padding rows are zero.
  Tensor embed(const Batch& batch, std::span<const Sentence> sentences) const;

 private:
  Tensor embed_rows(const std::vector<const std::string*>& rows,
                    std::span<const std::uint8_t> mask) const;

  std::shared_ptr<const WordTable> words_;
  Tensor pattern_table_;
  bool use_pattern_;
};

}  // namespace ecnet
