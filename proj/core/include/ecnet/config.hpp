#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ecnet/encoder.hpp"
#include "ecnet/loss.hpp"

namespace ecnet {

struct OptimizerConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;  // decoupled
  double lr_decay = 0.1;
  std::size_t lr_decay_every = 100;  // epochs
  std::size_t batch_size = 64;
  std::size_t max_epochs = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Storage precision of trained parameters. Arithmetic is always double;
/// with kFloat32 every parameter is rounded to float after each update and
/// checkpoints store 32-bit reals.
enum class Precision { kFloat32, kFloat64 };

struct ModelConfig {
  EncoderConfig encoder;
  LossConfig loss;
  OptimizerConfig optim;

  std::size_t d_w = 0;  // 0: taken from the vector file
  std::size_t d_p = 128;
  std::size_t head_kernel = 3;
  bool use_pattern_embedding = true;
  bool head_relu = true;
  std::vector<std::string> classes;  // entity types, non-entity excluded
  std::string pretrained;            // word vector file
  std::uint64_t seed = 1;
  double threshold = 0.5;            // default decoding threshold
  double select_threshold = 0.5;     // threshold for dev-based model selection
  std::size_t eval_every = 10;       // dev evaluation cadence in epochs
  bool filter_full_cover = true;     // also drop sentences covered by one entity type
  int tag_column = -1;
  Precision precision = Precision::kFloat32;

  /// Full-scale hyperparameters (the struct defaults).
  static ModelConfig full();
  /// Small settings for CPU-scale experiments: d_model 64, 4 heads, two MHA
  /// and two ACCN layers, batch 8, 200 epochs.
  static ModelConfig desk();

  void validate() const;

  /// Flat key=value text; from_text() accepts what to_text() writes. A
  /// `preset=desk|full` line selects the starting point regardless of its
  /// position; unknown keys are rejected.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  static ModelConfig load(const std::filesystem::path& path);
};

/// Throws std::invalid_argument naming the first architectural field that
/// differs (anything that changes parameter names or shapes).
void check_same_architecture(const ModelConfig& expected, const ModelConfig& actual);

}  // namespace ecnet
