#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "ecnet/config.hpp"
#include "ecnet/tensor.hpp"

namespace ecnet {

class EcNet;
class WordTable;

/// Binary layout (all integers u32 little-endian):
///   "ECNT" | version | len + config text | records...
///   record = len + name | rank | extents... | raw little-endian reals
/// Version 1 stores 32-bit reals, version 2 64-bit reals. The config text is
/// ModelConfig::to_text() followed by checkpoint.epoch= and checkpoint.rng=
/// lines.
inline constexpr char kCheckpointMagic[4] = {'E', 'C', 'N', 'T'};
inline constexpr std::uint32_t kCheckpointVersionF32 = 1;
inline constexpr std::uint32_t kCheckpointVersionF64 = 2;

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  ModelConfig config;
  std::vector<CheckpointTensor> tensors;
  std::uint64_t epoch = 0;
  std::string rng_state;  // textual engine state, may be empty
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Checkpoint snapshot(const EcNet& model, std::uint64_t epoch, const std::string& rng_state);

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
/// Parses the whole stream before returning; nothing is returned on error.
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// As load_checkpoint(), additionally rejecting an architecture that differs
/// from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

/// Copies checkpoint tensors into the model. Names and shapes must match the
/// model's parameters one for one; the model is untouched on error.
void restore_parameters(EcNet& model, const Checkpoint& ckpt);

/// Rebuilds a model from a checkpoint. Word vectors are read from the
/// recorded `pretrained` path unless supplied.
std::unique_ptr<EcNet> load_model(const Checkpoint& ckpt,
                                  std::shared_ptr<const WordTable> words = nullptr);

}  // namespace ecnet
