#include "ecnet/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>

namespace ecnet {

namespace {

// 37 filler words plus 3 punctuation/number tokens.
const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words = {
      "the",   "a",      "of",    "to",    "in",     "and",   "said",  "on",   "for",   "with",
      "was",   "by",     "from",  "at",    "will",   "has",   "after", "about", "over", "new",
      "talks", "visit",  "team",  "won",   "against", "told",  "week",  "meet", "plan",  "bank",
      "city",  "report", "deal",  "early", "late",   "market", "group", ",",    ".",     "42"};
  return words;
}

// 25 entity stems, rendered Title-case (PER) or upper-case (ORG).
const std::vector<std::string>& entity_stems() {
  static const std::vector<std::string> stems = {
      "arlo",  "bexa",  "corin", "dunmo", "elsko", "faro",  "gindel", "hovar", "istra",
      "jolen", "kaveh", "lumar", "mirso", "navik", "orrel", "pelta",  "quorn", "rasid",
      "sovel", "tarik", "umber", "velko", "wendt", "yaris", "zorva"};
  return stems;
}

std::string render(const std::string& stem, int type) {
  std::string s = stem;
  if (type == 1) {
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  } else {
    for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  }
  return s;
}

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

struct Mention {
  int type;
  std::size_t length;
};

Sentence make_sentence(std::mt19937_64& rng, const SyntheticOptions& opt) {
  const auto& filler = filler_words();
  const auto& stems = entity_stems();
  const std::size_t n = uniform(rng, opt.min_length, opt.max_length);

  std::vector<Mention> mentions;
  std::vector<std::size_t> gaps;  // non-entity tokens before each mention, plus a tail
  for (;;) {
    mentions.clear();
    const std::size_t k = uniform(rng, 1, 3);
    for (std::size_t i = 0; i < k; ++i) {
      mentions.push_back({static_cast<int>(uniform(rng, 1, 2)), uniform(rng, 1, 3)});
    }
    std::size_t used = 0;
    gaps.assign(k + 1, 0);
    for (std::size_t i = 0; i < k; ++i) {
      used += mentions[i].length;
      if (i > 0 && mentions[i].type == mentions[i - 1].type) gaps[i] = 1;
    }
    std::size_t required = used;
    for (auto g : gaps) required += g;
    if (required + 1 > n) continue;  // need at least one free non-entity token
    std::size_t free_tokens = n - required;
    // At least one non-entity token somewhere; spread the rest at random.
    while (free_tokens-- > 0) ++gaps[uniform(rng, 0, k)];
    break;
  }

  Sentence s;
  auto add_filler = [&](std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) s.tokens.push_back(filler[rng() % filler.size()]);
  };
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    add_filler(gaps[i]);
    const std::size_t start = s.tokens.size();
    for (std::size_t j = 0; j < mentions[i].length; ++j) {
      s.tokens.push_back(render(stems[rng() % stems.size()], mentions[i].type));
    }
    s.gold_spans.push_back({start, s.tokens.size() - 1, mentions[i].type, 1.0});
  }
  add_filler(gaps.back());
  return s;
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options) {
  if (options.min_length < 2 || options.max_length < options.min_length) {
    throw std::invalid_argument("synthetic corpus needs 2 <= min_length <= max_length");
  }
  SyntheticCorpus corpus;
  corpus.labels = LabelSet({"PER", "ORG"});
  corpus.labels.freeze();

  std::mt19937_64 rng(options.seed);
  for (std::size_t i = 0; i < options.train_sentences; ++i) corpus.train.push_back(make_sentence(rng, options));
  for (std::size_t i = 0; i < options.dev_sentences; ++i) corpus.dev.push_back(make_sentence(rng, options));

  std::vector<std::string> words = filler_words();
  for (const auto& stem : entity_stems()) words.push_back(stem);
  std::vector<double> values(words.size() * options.word_dim);
  for (auto& v : values) v = 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0;
  corpus.vectors = WordTable(options.word_dim, std::move(words), std::move(values));
  return corpus;
}

void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("train.conll");
    write_conll(out, corpus.train, corpus.labels);
  }
  {
    auto out = open("dev.conll");
    write_conll(out, corpus.dev, corpus.labels);
  }
  auto out = open("vectors.txt");
  save_pretrained(out, corpus.vectors);
}

}  // namespace ecnet
