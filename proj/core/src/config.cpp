#include "ecnet/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace ecnet {

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.encoder.d_model = 64;
  c.encoder.heads = 4;
  c.encoder.n_mha_layers = 2;
  c.encoder.n_accn_layers = 2;
  c.optim.batch_size = 8;
  c.optim.max_epochs = 200;
  return c;
}

void ModelConfig::validate() const {
  encoder.validate();
  loss.validate();
  if (classes.empty()) throw std::invalid_argument("config: class list is empty");
  for (const auto& c : classes) {
    if (c.empty() || c == "O" || c == "non-entity") {
      throw std::invalid_argument("config: invalid entity class name '" + c + "'");
    }
  }
  if (use_pattern_embedding && d_p == 0) throw std::invalid_argument("config: d_p must be positive");
  if (head_kernel % 2 == 0) throw std::invalid_argument("config: head_kernel must be odd");
  if (!(optim.lr > 0) || !(optim.lr_decay > 0) || optim.weight_decay < 0) {
    throw std::invalid_argument("config: learning rate, decay and weight decay must be positive");
  }
  if (optim.batch_size == 0 || optim.lr_decay_every == 0) {
    throw std::invalid_argument("config: batch_size and lr_decay_every must be positive");
  }
  if (threshold < 0 || threshold > 1) throw std::invalid_argument("config: threshold outside [0, 1]");
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += items[i];
  }
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
  return d;
}

template <class Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument("config: " + key + " expects an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: " + key + " expects true/false, got '" + v + "'");
}

struct Field {
  std::function<std::string(const ModelConfig&)> get;
  std::function<void(ModelConfig&, const std::string&, const std::string&)> set;
};

#define ECNET_SIZE_FIELD(key, member)                                                   \
  {key, {[](const ModelConfig& c) { return std::to_string(c.member); },                 \
         [](ModelConfig& c, const std::string& k, const std::string& v) {              \
           c.member = to_int<std::size_t>(k, v);                                        \
         }}}
#define ECNET_DOUBLE_FIELD(key, member)                                                 \
  {key, {[](const ModelConfig& c) { return fmt_double(c.member); },                     \
         [](ModelConfig& c, const std::string& k, const std::string& v) {              \
           c.member = to_double(k, v);                                                  \
         }}}
#define ECNET_BOOL_FIELD(key, member)                                                   \
  {key, {[](const ModelConfig& c) { return std::string(c.member ? "true" : "false"); }, \
         [](ModelConfig& c, const std::string& k, const std::string& v) {              \
           c.member = to_bool(k, v);                                                    \
         }}}

// Ordered so that to_text() output is stable.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      ECNET_SIZE_FIELD("d_model", encoder.d_model),
      ECNET_SIZE_FIELD("n_mha_layers", encoder.n_mha_layers),
      ECNET_SIZE_FIELD("n_accn_layers", encoder.n_accn_layers),
      ECNET_SIZE_FIELD("heads", encoder.heads),
      ECNET_DOUBLE_FIELD("rd", encoder.rd),
      ECNET_SIZE_FIELD("accn_kernel", encoder.accn_kernel),
      ECNET_SIZE_FIELD("n_phases", encoder.n_phases),
      ECNET_DOUBLE_FIELD("dropout", encoder.dropout),
      ECNET_BOOL_FIELD("use_accn", encoder.use_accn),
      ECNET_BOOL_FIELD("positional_encoding", encoder.positional_encoding),
      ECNET_DOUBLE_FIELD("alpha", loss.alpha),
      ECNET_DOUBLE_FIELD("gamma", loss.gamma),
      ECNET_DOUBLE_FIELD("beta", loss.beta),
      {"focal_mode",
       {[](const ModelConfig& c) {
          return std::string(c.loss.focal_mode == FocalMode::kAllClasses ? "all_classes" : "gold_only");
        },
        [](ModelConfig& c, const std::string& k, const std::string& v) {
          if (v == "all_classes") c.loss.focal_mode = FocalMode::kAllClasses;
          else if (v == "gold_only") c.loss.focal_mode = FocalMode::kGoldOnly;
          else throw std::invalid_argument("config: " + k + " expects all_classes|gold_only");
        }}},
      ECNET_DOUBLE_FIELD("lr", optim.lr),
      ECNET_DOUBLE_FIELD("weight_decay", optim.weight_decay),
      ECNET_DOUBLE_FIELD("lr_decay", optim.lr_decay),
      ECNET_SIZE_FIELD("lr_decay_every", optim.lr_decay_every),
      ECNET_SIZE_FIELD("batch_size", optim.batch_size),
      ECNET_SIZE_FIELD("max_epochs", optim.max_epochs),
      ECNET_DOUBLE_FIELD("adam_beta1", optim.beta1),
      ECNET_DOUBLE_FIELD("adam_beta2", optim.beta2),
      ECNET_DOUBLE_FIELD("adam_eps", optim.eps),
      ECNET_SIZE_FIELD("d_w", d_w),
      ECNET_SIZE_FIELD("d_p", d_p),
      ECNET_SIZE_FIELD("head_kernel", head_kernel),
      ECNET_BOOL_FIELD("use_pattern_embedding", use_pattern_embedding),
      ECNET_BOOL_FIELD("head_relu", head_relu),
      {"classes",
       {[](const ModelConfig& c) { return join(c.classes); },
        [](ModelConfig& c, const std::string&, const std::string& v) { c.classes = split_list(v); }}},
      {"pretrained",
       {[](const ModelConfig& c) { return c.pretrained; },
        [](ModelConfig& c, const std::string&, const std::string& v) { c.pretrained = v; }}},
      {"seed",
       {[](const ModelConfig& c) { return std::to_string(c.seed); },
        [](ModelConfig& c, const std::string& k, const std::string& v) {
          c.seed = to_int<std::uint64_t>(k, v);
        }}},
      ECNET_DOUBLE_FIELD("threshold", threshold),
      ECNET_DOUBLE_FIELD("select_threshold", select_threshold),
      ECNET_SIZE_FIELD("eval_every", eval_every),
      ECNET_BOOL_FIELD("filter_full_cover", filter_full_cover),
      {"tag_column",
       {[](const ModelConfig& c) { return std::to_string(c.tag_column); },
        [](ModelConfig& c, const std::string& k, const std::string& v) { c.tag_column = to_int<int>(k, v); }}},
      {"precision",
       {[](const ModelConfig& c) {
          return std::string(c.precision == Precision::kFloat32 ? "f32" : "f64");
        },
        [](ModelConfig& c, const std::string& k, const std::string& v) {
          if (v == "f32") c.precision = Precision::kFloat32;
          else if (v == "f64") c.precision = Precision::kFloat64;
          else throw std::invalid_argument("config: " + k + " expects f32|f64");
        }}},
  };
  return table;
}

#undef ECNET_SIZE_FIELD
#undef ECNET_DOUBLE_FIELD
#undef ECNET_BOOL_FIELD

}  // namespace

std::string ModelConfig::to_text() const {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + "=" + field.get(*this) + "\n";
  return out;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  std::vector<std::tuple<std::size_t, std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  ModelConfig cfg;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto first = s.find_first_not_of(" \t");
      if (first == std::string::npos) return std::string();
      const auto last = s.find_last_not_of(" \t");
      return s.substr(first, last - first + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "preset") {
      if (value == "desk") cfg = desk();
      else if (value == "full") cfg = full();
      else throw std::invalid_argument("config: unknown preset '" + value + "'");
      continue;
    }
    entries.emplace_back(line_no, std::move(key), std::move(value));
  }
  for (const auto& [no, key, value] : entries) {
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& f) { return f.first == key; });
    if (it == table.end()) {
      throw std::invalid_argument("config line " + std::to_string(no) + ": unknown key '" + key + "'");
    }
    it->second.set(cfg, key, value);
  }
  return cfg;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  ModelConfig cfg = from_text(buf.str());
  if (!cfg.pretrained.empty()) {
    std::filesystem::path p(cfg.pretrained);
    if (p.is_relative()) cfg.pretrained = (path.parent_path() / p).lexically_normal().string();
  }
  return cfg;
}

void check_same_architecture(const ModelConfig& expected, const ModelConfig& actual) {
  auto differ = [](const char* what, auto a, auto b) {
    if (a != b) {
      std::ostringstream os;
      os << "architecture mismatch in " << what << ": expected " << a << ", checkpoint has " << b;
      throw std::invalid_argument(os.str());
    }
  };
  const auto& e = expected.encoder;
  const auto& a = actual.encoder;
  differ("d_model", e.d_model, a.d_model);
  differ("n_mha_layers", e.n_mha_layers, a.n_mha_layers);
  differ("n_accn_layers", e.n_accn_layers, a.n_accn_layers);
  differ("heads", e.heads, a.heads);
  differ("rd", e.rd, a.rd);
  differ("accn_kernel", e.accn_kernel, a.accn_kernel);
  differ("n_phases", e.n_phases, a.n_phases);
  differ("use_accn", e.use_accn, a.use_accn);
  differ("positional_encoding", e.positional_encoding, a.positional_encoding);
  if (expected.d_w != 0 && actual.d_w != 0) differ("d_w", expected.d_w, actual.d_w);
  differ("d_p", expected.d_p, actual.d_p);
  differ("head_kernel", expected.head_kernel, actual.head_kernel);
  differ("use_pattern_embedding", expected.use_pattern_embedding, actual.use_pattern_embedding);
  differ("head_relu", expected.head_relu, actual.head_relu);
  differ("classes", join(expected.classes), join(actual.classes));
}

}  // namespace ecnet
