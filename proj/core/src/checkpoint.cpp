#include "ecnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "ecnet/model.hpp"

namespace ecnet {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
    }
  }
  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint64_t u64(const char* what) {
    const std::uint64_t lo = u32(what);
    const std::uint64_t hi = u32(what);
    return lo | (hi << 32);
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    if (n > (1u << 30)) throw CheckpointError(std::string("implausible length for ") + what);
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }

 private:
  std::istream& in_;
};

}  // namespace

Checkpoint snapshot(const EcNet& model, std::uint64_t epoch, const std::string& rng_state) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.epoch = epoch;
  ckpt.rng_state = rng_state;
  for (const auto& p : model.params().entries()) {
    ckpt.tensors.push_back({p.name, p.value.shape(), {p.value.data().begin(), p.value.data().end()}});
  }
  return ckpt;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const bool f32 = ckpt.config.precision == Precision::kFloat32;
  out.write(kCheckpointMagic, 4);
  put_u32(out, f32 ? kCheckpointVersionF32 : kCheckpointVersionF64);
  std::string text = ckpt.config.to_text();
  text += "checkpoint.epoch=" + std::to_string(ckpt.epoch) + "\n";
  text += "checkpoint.rng=" + ckpt.rng_state + "\n";
  put_string(out, text);
  for (const auto& t : ckpt.tensors) {
    put_string(out, t.name);
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto e : t.shape) put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t.values) {
      if (f32) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_u64(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  if (!out) throw CheckpointError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  Reader r(in);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw CheckpointError("not an ECNT checkpoint");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersionF32 && version != kCheckpointVersionF64) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::string text = r.str("config");

  Checkpoint ckpt;
  std::string config_text;
  std::istringstream lines(text);
  bool saw_epoch = false;
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("checkpoint.epoch=", 0) == 0) {
      ckpt.epoch = std::stoull(line.substr(17));
      saw_epoch = true;
    } else if (line.rfind("checkpoint.rng=", 0) == 0) {
      ckpt.rng_state = line.substr(15);
    } else {
      config_text += line + "\n";
    }
  }
  if (!saw_epoch) throw CheckpointError("checkpoint header lacks an epoch counter");
  try {
    ckpt.config = ModelConfig::from_text(config_text);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("bad checkpoint config: ") + e.what());
  }
  const bool expect_f32 = ckpt.config.precision == Precision::kFloat32;
  if (expect_f32 != (version == kCheckpointVersionF32)) {
    throw CheckpointError("checkpoint version does not match its precision setting");
  }

  while (!r.at_end()) {
    CheckpointTensor t;
    t.name = r.str("tensor name");
    const std::uint32_t rank = r.u32("rank");
    if (rank == 0 || rank > 8) throw CheckpointError("bad rank for " + t.name);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t e = r.u32("extent");
      if (e == 0) throw CheckpointError("zero extent in " + t.name);
      t.shape.push_back(e);
      count *= e;
    }
    if (count > (std::size_t{1} << 31)) throw CheckpointError("implausible tensor size for " + t.name);
    t.values.resize(count);
    for (auto& v : t.values) {
      v = version == kCheckpointVersionF32
              ? static_cast<double>(std::bit_cast<float>(r.u32(t.name.c_str())))
              : std::bit_cast<double>(r.u64(t.name.c_str()));
    }
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_checkpoint(in);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ckpt = load_checkpoint(path);
  check_same_architecture(expected, ckpt.config);
  return ckpt;
}

void restore_parameters(EcNet& model, const Checkpoint& ckpt) {
  auto& entries = model.params().entries();
  std::map<std::string, const CheckpointTensor*> by_name;
  for (const auto& t : ckpt.tensors) {
    if (!by_name.emplace(t.name, &t).second) throw CheckpointError("duplicate tensor " + t.name);
  }
  for (const auto& e : entries) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) throw CheckpointError("checkpoint is missing parameter " + e.name);
    if (it->second->shape != e.value.shape()) {
      throw CheckpointError("shape mismatch for " + e.name + ": model " + to_string(e.value.shape()) +
                            ", checkpoint " + to_string(it->second->shape));
    }
  }
  if (by_name.size() != entries.size()) throw CheckpointError("checkpoint has unexpected extra tensors");
  for (auto& e : entries) {
    const auto& src = by_name.at(e.name)->values;
    std::copy(src.begin(), src.end(), e.value.mutable_data().begin());
    e.value.zero_grad();
  }
}

std::unique_ptr<EcNet> load_model(const Checkpoint& ckpt, std::shared_ptr<const WordTable> words) {
  if (!words) {
    if (ckpt.config.pretrained.empty()) throw CheckpointError("checkpoint names no word vector file");
    words = std::make_shared<const WordTable>(load_pretrained(ckpt.config.pretrained));
  }
  auto model = std::make_unique<EcNet>(ckpt.config, std::move(words));
  restore_parameters(*model, ckpt);
  return model;
}

}  // namespace ecnet
