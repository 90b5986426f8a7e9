#include "ecnet/embeddings.hpp"

#include <locale.h>
#include <wctype.h>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ecnet/ops.hpp"

namespace ecnet {

std::string_view pattern_name(PatternId id) {
  static constexpr std::string_view names[kPatternCount] = {
      "upper", "lower", "title", "mixed", "upper+symbol",
      "lower+symbol", "title+symbol", "mixed+symbol", "symbol", "other"};
  return names[static_cast<std::size_t>(id)];
}

namespace {

enum class CharClass { kUpper, kLower, kSymbol, kUnclassified };

locale_t utf8_locale() {
  static const locale_t loc = [] {
    locale_t l = newlocale(LC_CTYPE_MASK, "C.UTF-8", static_cast<locale_t>(0));
    if (!l) l = newlocale(LC_CTYPE_MASK, "en_US.UTF-8", static_cast<locale_t>(0));
    return l;
  }();
  return loc;
}

CharClass classify_char(char32_t c) {
  if (c < 0x80) {
    if (c >= 'A' && c <= 'Z') return CharClass::kUpper;
    if (c >= 'a' && c <= 'z') return CharClass::kLower;
    if (c > 0x20 && c < 0x7f) return CharClass::kSymbol;
    return CharClass::kUnclassified;
  }
  const locale_t loc = utf8_locale();
  if (!loc) return CharClass::kUnclassified;
  const auto wc = static_cast<wint_t>(c);
  if (iswupper_l(wc, loc)) return CharClass::kUpper;
  if (iswlower_l(wc, loc)) return CharClass::kLower;
  if (iswalpha_l(wc, loc) || iswspace_l(wc, loc) || iswcntrl_l(wc, loc)) {
    return CharClass::kUnclassified;
  }
  if (iswpunct_l(wc, loc) || iswdigit_l(wc, loc)) return CharClass::kSymbol;
  return CharClass::kUnclassified;
}

// Decodes UTF-8; malformed sequences yield U+FFFF-range sentinels that
// classify as unclassified.
std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  std::size_t i = 0;
  constexpr char32_t kBad = 0xFFFFFFFF;
  while (i < s.size()) {
    const auto b = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b < 0x80) {
      len = 1;
      cp = b;
    } else if ((b & 0xE0) == 0xC0) {
      len = 2;
      cp = b & 0x1F;
    } else if ((b & 0xF0) == 0xE0) {
      len = 3;
      cp = b & 0x0F;
    } else if ((b & 0xF8) == 0xF0) {
      len = 4;
      cp = b & 0x07;
    } else {
      out.push_back(kBad);
      ++i;
      continue;
    }
    if (i + len > s.size()) {
      out.push_back(kBad);
      break;
    }
    bool ok = true;
    for (std::size_t j = 1; j < len; ++j) {
      const auto cb = static_cast<unsigned char>(s[i + j]);
      if ((cb & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (cb & 0x3F);
    }
    out.push_back(ok ? cp : kBad);
    i += ok ? len : 1;
  }
  return out;
}

}  // namespace

PatternId classify_pattern(std::string_view word) {
  if (word.empty()) throw std::invalid_argument("classify_pattern: empty word");
  std::vector<CharClass> letters;
  bool has_symbol = false;
  for (char32_t c : decode_utf8(word)) {
    const CharClass cls = c == 0xFFFFFFFF ? CharClass::kUnclassified : classify_char(c);
    switch (cls) {
      case CharClass::kUnclassified:
        return PatternId::kOther;
      case CharClass::kSymbol:
        has_symbol = true;
        break;
      default:
        letters.push_back(cls);
    }
  }
  if (letters.empty()) return PatternId::kSymbolOnly;

  bool any_upper = false;
  bool any_lower = false;
  for (auto c : letters) (c == CharClass::kUpper ? any_upper : any_lower) = true;
  bool title = letters.size() >= 2 && letters.front() == CharClass::kUpper;
  for (std::size_t i = 1; title && i < letters.size(); ++i) title = letters[i] == CharClass::kLower;

  if (!has_symbol) {
    if (!any_lower) return PatternId::kUpper;
    if (!any_upper) return PatternId::kLower;
    return title ? PatternId::kTitle : PatternId::kMixed;
  }
  if (!any_lower) return PatternId::kUpperSymbol;
  if (!any_upper) return PatternId::kLowerSymbol;
  return title ? PatternId::kTitleSymbol : PatternId::kMixedSymbol;
}

WordTable::WordTable(std::size_t dim, std::vector<std::string> words, std::vector<double> vectors)
    : dim_(dim), words_(std::move(words)), vectors_(std::move(vectors)), unk_(dim, 0.0) {
  if (dim_ == 0) throw std::invalid_argument("word vectors need a positive dimension");
  if (vectors_.size() != words_.size() * dim_) {
    throw std::invalid_argument("word table: vector storage does not match word count");
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    index_.emplace(words_[i], i);  // first occurrence wins on duplicates
    for (std::size_t j = 0; j < dim_; ++j) unk_[j] += vectors_[i * dim_ + j];
  }
  if (!words_.empty()) {
    for (auto& v : unk_) v /= static_cast<double>(words_.size());
  }
}

std::span<const double> WordTable::lookup(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return unk_;
  return {vectors_.data() + it->second * dim_, dim_};
}

WordTable load_pretrained(std::istream& in) {
  std::vector<std::string> words;
  std::vector<double> values;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::vector<std::string> cols;
    for (std::string f; fields >> f;) cols.push_back(std::move(f));
    if (cols.empty()) continue;
    if (first) {
      first = false;
      std::size_t a = 0;
      std::size_t b = 0;
      auto is_count = [](const std::string& s, std::size_t& v) {
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        return ec == std::errc() && p == s.data() + s.size();
      };
      if (cols.size() == 2 && is_count(cols[0], a) && is_count(cols[1], b)) continue;
    }
    const std::size_t d = cols.size() - 1;
    if (d == 0) throw ParseError("word without vector", line_no);
    if (dim == 0) dim = d;
    if (d != dim) {
      throw ParseError("vector has " + std::to_string(d) + " components, expected " +
                           std::to_string(dim),
                       line_no);
    }
    words.push_back(cols[0]);
    for (std::size_t j = 1; j < cols.size(); ++j) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cols[j], &used));
        if (used != cols[j].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ParseError("bad number '" + cols[j] + "'", line_no);
      }
    }
  }
  if (words.empty()) throw std::runtime_error("pretrained vector file has no entries");
  return WordTable(dim, std::move(words), std::move(values));
}

WordTable load_pretrained(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_pretrained(in);
}

void save_pretrained(std::ostream& out, const WordTable& table) {
  out << table.size() << ' ' << table.dim() << '\n';
  std::ostringstream buf;
  buf.precision(17);
  for (const auto& w : table.words()) {
    buf.str("");
    buf << w;
    for (double v : table.lookup(w)) buf << ' ' << v;
    out << buf.str() << '\n';
  }
}

Embedder::Embedder(std::shared_ptr<const WordTable> words, Tensor pattern_table, bool use_pattern)
    : words_(std::move(words)), pattern_table_(std::move(pattern_table)), use_pattern_(use_pattern) {
  if (!words_) throw std::invalid_argument("embedder needs a word table");
  if (use_pattern_ && (!pattern_table_.defined() || pattern_table_.rank() != 2 ||
                       pattern_table_.dim(0) != kPatternCount)) {
    throw ShapeError("pattern table must be [10 x d_p]");
  }
}

std::size_t Embedder::output_dim() const {
  return words_->dim() + (use_pattern_ ? pattern_table_.dim(1) : 0);
}

Tensor Embedder::embed_rows(const std::vector<const std::string*>& rows,
                            std::span<const std::uint8_t> mask) const {
  const std::size_t dw = words_->dim();
  std::vector<double> word_part(rows.size() * dw, 0.0);
  std::vector<std::size_t> pattern_ids(rows.size(), static_cast<std::size_t>(PatternId::kOther));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!mask[r]) continue;
    const auto v = words_->lookup(*rows[r]);
    std::copy(v.begin(), v.end(), word_part.begin() + static_cast<std::ptrdiff_t>(r * dw));
    pattern_ids[r] = static_cast<std::size_t>(classify_pattern(*rows[r]));
  }
  Tensor words = Tensor::from({rows.size(), dw}, std::move(word_part));
  if (!use_pattern_) return words;
  Tensor patterns = ops::mask_rows(ops::gather_rows(pattern_table_, pattern_ids), mask);
  return ops::concat({words, patterns}, 1);
}

Tensor Embedder::embed(std::span<const std::string> tokens) const {
  if (tokens.empty()) throw std::invalid_argument("cannot embed an empty sentence");
  std::vector<const std::string*> rows;
  for (const auto& t : tokens) rows.push_back(&t);
  std::vector<std::uint8_t> mask(rows.size(), 1);
  return embed_rows(rows, mask);
}

Tensor Embedder::embed(const Batch& batch, std::span<const Sentence> sentences) const {
  static const std::string kPad = "<pad>";
  std::vector<const std::string*> rows(batch.size() * batch.length, &kPad);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = sentences[batch.sentence_ids[b]];
    for (std::size_t t = 0; t < s.size(); ++t) rows[b * batch.length + t] = &s.tokens[t];
  }
  Tensor flat = embed_rows(rows, batch.mask);
  return ops::reshape(flat, {batch.size(), batch.length, output_dim()});
}

}  // namespace ecnet
