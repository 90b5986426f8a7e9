#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecnet {

/// Typed, inclusive token range. type_id runs 1..c; 0 is never a valid entity
/// type (it denotes the non-entity class in PositionTarget).
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  int type_id = 0;
  double confidence = 1.0;

  bool overlaps(const EntitySpan& other) const {
    return start <= other.end && other.start <= end;
  }
  /// Span identity for scoring: boundaries and type, confidence ignored.
  bool same_entity(const EntitySpan& other) const {
    return start == other.start && end == other.end && type_id == other.type_id;
  }
};

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<EntitySpan> gold_spans;

  std::size_t size() const { return tokens.size(); }
};

/// Per-token training target: distances to the span boundaries and the class.
struct PositionTarget {
  std::size_t left = 0;
  std::size_t right = 0;
  int type_id = 0;  // 0 = non-entity

  bool is_entity() const { return type_id != 0; }
  /// Class slot in a (c + 1)-wide distribution: entity types map to
  /// type_id - 1, the non-entity class to the last slot c.
  std::size_t class_slot(std::size_t n_types) const {
    return is_entity() ? static_cast<std::size_t>(type_id - 1) : n_types;
  }
  std::vector<std::uint8_t> class_onehot(std::size_t n_types) const;
};

/// Entity type names <-> ids (1-based, in insertion order).
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names);

  /// Id of `name`, adding it unless the set is frozen.
  int intern(const std::string& name);
  std::optional<int> find(const std::string& name) const;
  const std::string& name(int type_id) const;
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

 private:
  std::vector<std::string> names_;
  bool frozen_ = false;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads whitespace-separated CoNLL columns with blank-line sentence breaks.
/// `tag_column` indexes the tag column; negative values count from the end
/// (-1 = last). -DOCSTART- lines are skipped. Every token line must have the
/// same column count as the first one.
std::vector<Sentence> parse_conll(std::istream& in, LabelSet& labels, int tag_column = -1);
std::vector<Sentence> parse_conll(const std::filesystem::path& path, LabelSet& labels,
                                  int tag_column = -1);

/// Converts B-/I-/O tags into spans. B- always opens a span; I- continues a
/// span of the same type and otherwise opens one.
std::vector<EntitySpan> spans_from_tags(std::span<const std::string> tags, LabelSet& labels,
                                        std::size_t first_line = 0);
/// IOB2 tags for a non-overlapping span set.
std::vector<std::string> tags_from_spans(std::span<const EntitySpan> spans, std::size_t n,
                                         const LabelSet& labels);
void write_conll(std::ostream& out, std::span<const Sentence> sentences, const LabelSet& labels);

/// Throws std::invalid_argument unless every span is in bounds, well-typed and
/// no two spans overlap.
void validate_spans(std::span<const EntitySpan> spans, std::size_t n);

std::vector<PositionTarget> targets_from_spans(const Sentence& s);
/// Groups contiguous same-type positions whose offsets agree on one span.
std::vector<EntitySpan> spans_from_targets(std::span<const PositionTarget> targets);

/// Drops sentences whose positions all share one class (non-entity counts as
/// a class). With `drop_fully_covered` false only entity-free sentences go.
std::vector<Sentence> filter_single_class(std::span<const Sentence> sentences,
                                          bool drop_fully_covered = true);

struct Batch {
  std::vector<std::size_t> sentence_ids;
  std::size_t length = 0;             // padded length (batch maximum)
  std::vector<std::uint8_t> mask;     // [size() * length], 1 for real tokens

  std::size_t size() const { return sentence_ids.size(); }
};

std::vector<Batch> make_batches(std::span<const Sentence> sentences, std::size_t batch_size,
                                std::uint64_t seed, bool shuffle = true);
/// Single batch over the given sentence indices, in order.
Batch make_batch(std::span<const Sentence> sentences, std::vector<std::size_t> ids);

// JSON-lines predictions: {"tokens": [...], "spans": [{"start", "end", "type",
// "confidence"}]} per line.
struct PredictedSentence {
  std::vector<std::string> tokens;
  std::vector<EntitySpan> spans;
};

void write_predictions_jsonl(std::ostream& out, std::span<const PredictedSentence> predictions,
                             const LabelSet& labels);
std::vector<PredictedSentence> read_predictions_jsonl(std::istream& in, LabelSet& labels);

}  // namespace ecnet
