#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ecnet/parameters.hpp"
#include "ecnet/tensor.hpp"

namespace ecnet {

struct EncoderConfig {
  std::size_t d_model = 512;
  std::size_t n_mha_layers = 3;
  std::size_t n_accn_layers = 3;
  std::size_t heads = 8;
  double rd = 0.25;           // ACCN reduction factor
  std::size_t accn_kernel = 3;
  std::size_t n_phases = 3;   // yields n_phases + 1 fused maps
  double dropout = 0.1;       // MHA sublayers only
  bool use_accn = true;       // false: n_accn_layers extra MHA layers instead
  bool positional_encoding = true;

  /// d_model * rd; validate() guarantees it is a positive integer.
  std::size_t reduced_dim() const;
  std::size_t total_mha_layers() const { return n_mha_layers + (use_accn ? 0 : n_accn_layers); }
  /// Throws std::invalid_argument on violated invariants.
  void validate() const;
};

/// Per-pass switches shared by every layer.
struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout
};

/// Sinusoidal table [n x d_model]: sin at even, cos at odd dims, with
/// frequency 10000^(-2i/d_model).
Tensor positional_encoding(std::size_t n, std::size_t d_model);

class Conv1d {
 public:
  Conv1d(ParameterSet& params, const std::string& name, std::size_t d_in, std::size_t d_out,
         std::size_t kernel, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;

  Tensor weight;  // [d_out x d_in x k]
  Tensor bias;    // [d_out]
};

/// conv_a(x) * sigmoid(conv_b(x)) with independent parameter sets.
class Glu {
 public:
  Glu(ParameterSet& params, const std::string& name, std::size_t d_in, std::size_t d_out,
      std::size_t kernel, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;

  Conv1d a;
  Conv1d b;
};

/// Self-attention, dropout, residual add, layer norm. No feed-forward
/// sublayer.
class MhaLayer {
 public:
  MhaLayer(ParameterSet& params, const std::string& name, const EncoderConfig& cfg,
           std::mt19937_64& rng);
  Tensor forward(const Tensor& x, std::span<const std::uint8_t> mask,
                 const ForwardContext& ctx) const;

  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln_gamma, ln_beta;

 private:
  std::size_t heads_;
  double dropout_;
};

class MhaStack {
 public:
  MhaStack(ParameterSet& params, const std::string& name, const EncoderConfig& cfg,
           std::size_t layers, std::mt19937_64& rng);
  /// x: [B x T x d_model]. Padding rows of the result are zero.
  Tensor forward(const Tensor& x, std::span<const std::uint8_t> mask,
                 const ForwardContext& ctx) const;

  std::vector<MhaLayer> layers;
};

/// Adaptive context convolution layer: reduce (k=1 GLU) -> residual ELU-GLU
/// phases -> channel-wise max over all phase maps -> expand (k=1 GLU, ELU)
/// -> ELU(expanded + input). Padding rows are zeroed before every convolution
/// and on output.
class AccnLayer {
 public:
  AccnLayer(ParameterSet& params, const std::string& name, const EncoderConfig& cfg,
            std::mt19937_64& rng);
  Tensor forward(const Tensor& h, std::span<const std::uint8_t> mask) const;

  Glu reduce;
  std::vector<Glu> phases;
  Glu expand;
};

/// Input projection, positional encoding, MHA stack, ACCN stack.
class Encoder {
 public:
  Encoder(ParameterSet& params, const EncoderConfig& cfg, std::size_t input_dim,
          std::mt19937_64& rng);

  /// emb: [B x T x input_dim] -> [B x T x d_model].
  Tensor forward(const Tensor& emb, std::span<const std::uint8_t> mask,
                 const ForwardContext& ctx) const;

  const EncoderConfig& config() const { return cfg_; }

  Tensor proj_w, proj_b;
  MhaStack mha;
  std::vector<AccnLayer> accn;

 private:
  EncoderConfig cfg_;
};

}  // namespace ecnet
