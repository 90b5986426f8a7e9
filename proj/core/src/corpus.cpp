#include "ecnet/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ecnet {

std::vector<std::uint8_t> PositionTarget::class_onehot(std::size_t n_types) const {
  std::vector<std::uint8_t> onehot(n_types + 1, 0);
  onehot[class_slot(n_types)] = 1;
  return onehot;
}

LabelSet::LabelSet(std::vector<std::string> names) {
  for (auto& n : names) intern(n);
}

int LabelSet::intern(const std::string& name) {
  if (auto id = find(name)) return *id;
  if (frozen_) throw std::invalid_argument("unknown entity type '" + name + "'");
  if (name.empty() || name == "O") throw std::invalid_argument("invalid entity type name '" + name + "'");
  names_.push_back(name);
  return static_cast<int>(names_.size());
}

std::optional<int> LabelSet::find(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<int>(it - names_.begin()) + 1;
}

const std::string& LabelSet::name(int type_id) const {
  if (type_id < 1 || static_cast<std::size_t>(type_id) > names_.size()) {
    throw std::out_of_range("entity type id " + std::to_string(type_id) + " out of range");
  }
  return names_[static_cast<std::size_t>(type_id - 1)];
}

std::vector<EntitySpan> spans_from_tags(std::span<const std::string> tags, LabelSet& labels,
                                        std::size_t first_line) {
  std::vector<EntitySpan> spans;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (tag == "O") {
      open = false;
      continue;
    }
    if (tag.size() < 3 || (tag[0] != 'B' && tag[0] != 'I') || tag[1] != '-') {
      throw ParseError("malformed tag '" + tag + "'", first_line + i);
    }
    int type = 0;
    try {
      type = labels.intern(tag.substr(2));
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), first_line + i);
    }
    if (tag[0] == 'I' && open && spans.back().type_id == type) {
      spans.back().end = i;
    } else {
      spans.push_back({i, i, type, 1.0});
      open = true;
    }
  }
  return spans;
}

std::vector<std::string> tags_from_spans(std::span<const EntitySpan> spans, std::size_t n,
                                         const LabelSet& labels) {
  validate_spans(spans, n);
  std::vector<std::string> tags(n, "O");
  for (const auto& s : spans) {
    const std::string& name = labels.name(s.type_id);
    tags[s.start] = "B-" + name;
    for (std::size_t i = s.start + 1; i <= s.end; ++i) tags[i] = "I-" + name;
  }
  return tags;
}

std::vector<Sentence> parse_conll(std::istream& in, LabelSet& labels, int tag_column) {
  std::vector<Sentence> sentences;
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  std::size_t columns = 0;
  std::size_t line_no = 0;
  std::size_t sentence_first_line = 0;

  auto flush = [&] {
    if (!tokens.empty()) {
      Sentence s;
      s.gold_spans = spans_from_tags(tags, labels, sentence_first_line);
      s.tokens = std::move(tokens);
      sentences.push_back(std::move(s));
    }
    tokens.clear();
    tags.clear();
  };

  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::vector<std::string> cols;
    for (std::string f; fields >> f;) cols.push_back(std::move(f));
    if (cols.empty()) {
      flush();
      continue;
    }
    if (cols.front() == "-DOCSTART-") {
      flush();
      continue;
    }
    if (columns == 0) {
      columns = cols.size();
      const long idx = tag_column < 0 ? static_cast<long>(columns) + tag_column : tag_column;
      if (columns < 2 || idx <= 0 || idx >= static_cast<long>(columns)) {
        throw ParseError("tag column " + std::to_string(tag_column) + " not available in " +
                         std::to_string(columns) + "-column data",
                         line_no);
      }
    }
    if (cols.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) + " columns, found " +
                           std::to_string(cols.size()),
                       line_no);
    }
    if (tokens.empty()) sentence_first_line = line_no;
    const std::size_t tag_idx =
        tag_column < 0 ? static_cast<std::size_t>(static_cast<long>(columns) + tag_column)
                       : static_cast<std::size_t>(tag_column);
    tokens.push_back(cols.front());
    tags.push_back(cols[tag_idx]);
  }
  flush();
  return sentences;
}

std::vector<Sentence> parse_conll(const std::filesystem::path& path, LabelSet& labels,
                                  int tag_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_conll(in, labels, tag_column);
}

void write_conll(std::ostream& out, std::span<const Sentence> sentences, const LabelSet& labels) {
  for (const auto& s : sentences) {
    const auto tags = tags_from_spans(s.gold_spans, s.size(), labels);
    for (std::size_t i = 0; i < s.size(); ++i) out << s.tokens[i] << ' ' << tags[i] << '\n';
    out << '\n';
  }
}

void validate_spans(std::span<const EntitySpan> spans, std::size_t n) {
  std::vector<const EntitySpan*> sorted;
  for (const auto& s : spans) {
    if (s.start > s.end || s.end >= n) {
      throw std::invalid_argument("span [" + std::to_string(s.start) + ", " +
                                  std::to_string(s.end) + "] out of bounds for " +
                                  std::to_string(n) + " tokens");
    }
    if (s.type_id < 1) throw std::invalid_argument("span carries non-entity type");
    sorted.push_back(&s);
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const EntitySpan* a, const EntitySpan* b) { return a->start < b->start; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->start <= sorted[i - 1]->end) {
      throw std::invalid_argument("overlapping gold spans at token " +
                                  std::to_string(sorted[i]->start));
    }
  }
}

std::vector<PositionTarget> targets_from_spans(const Sentence& s) {
  validate_spans(s.gold_spans, s.size());
  std::vector<PositionTarget> targets(s.size());
  for (const auto& span : s.gold_spans) {
    for (std::size_t i = span.start; i <= span.end; ++i) {
      targets[i] = {i - span.start, span.end - i, span.type_id};
    }
  }
  return targets;
}

std::vector<EntitySpan> spans_from_targets(std::span<const PositionTarget> targets) {
  std::vector<EntitySpan> spans;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    if (!t.is_entity() || t.left > i) continue;
    const std::size_t start = i - t.left;
    const std::size_t end = i + t.right;
    if (!spans.empty() && spans.back().start == start && spans.back().end == end &&
        spans.back().type_id == t.type_id) {
      continue;
    }
    spans.push_back({start, end, t.type_id, 1.0});
  }
  return spans;
}

std::vector<Sentence> filter_single_class(std::span<const Sentence> sentences,
                                          bool drop_fully_covered) {
  std::vector<Sentence> kept;
  for (const auto& s : sentences) {
    std::set<int> classes;
    for (const auto& t : targets_from_spans(s)) classes.insert(t.type_id);
    const bool single = classes.size() <= 1;
    const bool entity_free = !classes.empty() && *classes.rbegin() == 0;
    if (single && (drop_fully_covered || entity_free)) continue;
    kept.push_back(s);
  }
  return kept;
}

Batch make_batch(std::span<const Sentence> sentences, std::vector<std::size_t> ids) {
  if (ids.empty()) throw std::invalid_argument("empty batch");
  Batch batch;
  batch.sentence_ids = std::move(ids);
  for (auto id : batch.sentence_ids) {
    if (sentences[id].size() == 0) throw std::invalid_argument("empty sentence in batch");
    batch.length = std::max(batch.length, sentences[id].size());
  }
  batch.mask.assign(batch.size() * batch.length, 0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t n = sentences[batch.sentence_ids[b]].size();
    std::fill_n(batch.mask.begin() + static_cast<std::ptrdiff_t>(b * batch.length), n, 1);
  }
  return batch;
}

std::vector<Batch> make_batches(std::span<const Sentence> sentences, std::size_t batch_size,
                                std::uint64_t seed, bool shuffle) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  if (sentences.empty()) throw std::invalid_argument("cannot batch an empty corpus");
  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[rng() % (i + 1)]);
    }
  }
  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    batches.push_back(make_batch(sentences, {order.begin() + static_cast<std::ptrdiff_t>(begin),
                                             order.begin() + static_cast<std::ptrdiff_t>(end)}));
  }
  return batches;
}

void write_predictions_jsonl(std::ostream& out, std::span<const PredictedSentence> predictions,
                             const LabelSet& labels) {
  for (const auto& p : predictions) {
    nlohmann::json spans = nlohmann::json::array();
    for (const auto& s : p.spans) {
      spans.push_back({{"start", s.start},
                       {"end", s.end},
                       {"type", labels.name(s.type_id)},
                       {"confidence", s.confidence}});
    }
    out << nlohmann::json{{"tokens", p.tokens}, {"spans", spans}}.dump() << '\n';
  }
}

std::vector<PredictedSentence> read_predictions_jsonl(std::istream& in, LabelSet& labels) {
  std::vector<PredictedSentence> result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PredictedSentence p;
      p.tokens = j.at("tokens").get<std::vector<std::string>>();
      for (const auto& s : j.at("spans")) {
        p.spans.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(),
                           labels.intern(s.at("type").get<std::string>()),
                           s.at("confidence").get<double>()});
      }
      result.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return result;
}

}  // namespace ecnet
