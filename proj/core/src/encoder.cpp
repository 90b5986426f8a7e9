#include "ecnet/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "ecnet/ops.hpp"

namespace ecnet {

std::size_t EncoderConfig::reduced_dim() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(d_model) * rd));
}

void EncoderConfig::validate() const {
  if (d_model == 0) throw std::invalid_argument("d_model must be positive");
  if (heads == 0 || d_model % heads != 0) {
    throw std::invalid_argument("d_model " + std::to_string(d_model) +
                                " is not divisible by heads " + std::to_string(heads));
  }
  const double reduced = static_cast<double>(d_model) * rd;
  if (!(rd > 0) || reduced < 1 || std::abs(reduced - std::round(reduced)) > 1e-9) {
    throw std::invalid_argument("d_model * rd must be a positive integer");
  }
  if (accn_kernel % 2 == 0) throw std::invalid_argument("accn_kernel must be odd");
  if (n_phases == 0) throw std::invalid_argument("n_phases must be positive");
  if (dropout < 0 || dropout >= 1) throw std::invalid_argument("dropout must be in [0, 1)");
  if (positional_encoding && d_model % 2 != 0) {
    throw std::invalid_argument("positional encoding needs an even d_model");
  }
}

Tensor positional_encoding(std::size_t n, std::size_t d_model) {
  if (d_model % 2 != 0) throw std::invalid_argument("positional_encoding: d_model must be even");
  std::vector<double> pe(n * d_model);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) * freq;
      pe[pos * d_model + i] = std::sin(angle);
      pe[pos * d_model + i + 1] = std::cos(angle);
    }
  }
  return Tensor::from({n, d_model}, std::move(pe));
}

Conv1d::Conv1d(ParameterSet& params, const std::string& name, std::size_t d_in,
               std::size_t d_out, std::size_t kernel, std::mt19937_64& rng)
    : weight(params.add(name + ".weight", {d_out, d_in, kernel}, Init::kGlorot, rng)),
      bias(params.add(name + ".bias", {d_out}, Init::kZeros, rng)) {}

Tensor Conv1d::operator()(const Tensor& x) const { return ops::conv1d(x, weight, bias); }

Glu::Glu(ParameterSet& params, const std::string& name, std::size_t d_in, std::size_t d_out,
         std::size_t kernel, std::mt19937_64& rng)
    : a(params, name + ".a", d_in, d_out, kernel, rng),
      b(params, name + ".b", d_in, d_out, kernel, rng) {}

Tensor Glu::operator()(const Tensor& x) const { return ops::mul(a(x), ops::sigmoid(b(x))); }

MhaLayer::MhaLayer(ParameterSet& params, const std::string& name, const EncoderConfig& cfg,
                   std::mt19937_64& rng)
    : heads_(cfg.heads), dropout_(cfg.dropout) {
  const std::size_t d = cfg.d_model;
  wq = params.add(name + ".wq", {d, d}, Init::kGlorot, rng);
  bq = params.add(name + ".bq", {d}, Init::kZeros, rng);
  wk = params.add(name + ".wk", {d, d}, Init::kGlorot, rng);
  bk = params.add(name + ".bk", {d}, Init::kZeros, rng);
  wv = params.add(name + ".wv", {d, d}, Init::kGlorot, rng);
  bv = params.add(name + ".bv", {d}, Init::kZeros, rng);
  wo = params.add(name + ".wo", {d, d}, Init::kGlorot, rng);
  bo = params.add(name + ".bo", {d}, Init::kZeros, rng);
  ln_gamma = params.add(name + ".ln.gamma", {d}, Init::kOnes, rng);
  ln_beta = params.add(name + ".ln.beta", {d}, Init::kZeros, rng);
}

Tensor MhaLayer::forward(const Tensor& x, std::span<const std::uint8_t> mask,
                         const ForwardContext& ctx) const {
  Tensor q = ops::linear(x, wq, bq);
  Tensor k = ops::linear(x, wk, bk);
  Tensor v = ops::linear(x, wv, bv);
  Tensor attended = ops::linear(ops::attention(q, k, v, heads_, mask), wo, bo);
  if (ctx.training && dropout_ > 0) {
    if (!ctx.rng) throw std::logic_error("training forward pass needs an rng for dropout");
    attended = ops::dropout(attended, dropout_, true, *ctx.rng);
  }
  return ops::mask_rows(ops::layer_norm(ops::add(x, attended), ln_gamma, ln_beta), mask);
}

MhaStack::MhaStack(ParameterSet& params, const std::string& name, const EncoderConfig& cfg,
                   std::size_t n_layers, std::mt19937_64& rng) {
  layers.reserve(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    layers.emplace_back(params, name + "." + std::to_string(i), cfg, rng);
  }
}

Tensor MhaStack::forward(const Tensor& x, std::span<const std::uint8_t> mask,
                         const ForwardContext& ctx) const {
  if (x.rank() != 3) throw ShapeError("mha_stack expects [B x T x D], got " + to_string(x.shape()));
  Tensor h = x;
  for (const auto& layer : layers) h = layer.forward(h, mask, ctx);
  return h;
}

namespace {

std::vector<Glu> make_phases(ParameterSet& params, const std::string& name,
                             const EncoderConfig& cfg, std::mt19937_64& rng) {
  std::vector<Glu> phases;
  const std::size_t r = cfg.reduced_dim();
  for (std::size_t p = 1; p <= cfg.n_phases; ++p) {
    phases.emplace_back(params, name + ".phase" + std::to_string(p), r, r, cfg.accn_kernel, rng);
  }
  return phases;
}

}  // namespace

AccnLayer::AccnLayer(ParameterSet& params, const std::string& name, const EncoderConfig& cfg,
                     std::mt19937_64& rng)
    : reduce(params, name + ".reduce", cfg.d_model, cfg.reduced_dim(), 1, rng),
      phases(make_phases(params, name, cfg, rng)),
      expand(params, name + ".expand", cfg.reduced_dim(), cfg.d_model, 1, rng) {}

Tensor AccnLayer::forward(const Tensor& h, std::span<const std::uint8_t> mask) const {
  std::vector<Tensor> maps;
  maps.reserve(phases.size() + 1);
  maps.push_back(reduce(ops::mask_rows(h, mask)));
  for (const auto& phase : phases) {
    const Tensor& prev = maps.back();
    maps.push_back(ops::add(ops::elu(phase(ops::mask_rows(prev, mask))), prev));
  }
  Tensor fused = ops::max_of(maps);
  Tensor expanded = ops::elu(expand(ops::mask_rows(fused, mask)));
  return ops::mask_rows(ops::elu(ops::add(expanded, h)), mask);
}

namespace {

std::vector<AccnLayer> make_accn(ParameterSet& params, const EncoderConfig& cfg,
                                 std::mt19937_64& rng) {
  std::vector<AccnLayer> layers;
  if (!cfg.use_accn) return layers;
  for (std::size_t i = 0; i < cfg.n_accn_layers; ++i) {
    layers.emplace_back(params, "encoder.accn." + std::to_string(i), cfg, rng);
  }
  return layers;
}

Tensor make_proj(ParameterSet& params, const std::string& name, Shape shape, Init init,
                 const EncoderConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  return params.add(name, std::move(shape), init, rng);
}

}  // namespace

Encoder::Encoder(ParameterSet& params, const EncoderConfig& cfg, std::size_t input_dim,
                 std::mt19937_64& rng)
    : proj_w(make_proj(params, "encoder.proj.weight", {input_dim, cfg.d_model}, Init::kGlorot,
                       cfg, rng)),
      proj_b(params.add("encoder.proj.bias", {cfg.d_model}, Init::kZeros, rng)),
      mha(params, "encoder.mha", cfg, cfg.total_mha_layers(), rng),
      accn(make_accn(params, cfg, rng)),
      cfg_(cfg) {}

Tensor Encoder::forward(const Tensor& emb, std::span<const std::uint8_t> mask,
                        const ForwardContext& ctx) const {
  if (emb.rank() != 3) throw ShapeError("encoder expects [B x T x D], got " + to_string(emb.shape()));
  const std::size_t batch = emb.dim(0);
  const std::size_t len = emb.dim(1);
  Tensor x = ops::linear(emb, proj_w, proj_b);
  if (cfg_.positional_encoding) {
    const Tensor pe = positional_encoding(len, cfg_.d_model);
    std::vector<double> tiled;
    tiled.reserve(batch * pe.numel());
    for (std::size_t b = 0; b < batch; ++b) tiled.insert(tiled.end(), pe.data().begin(), pe.data().end());
    x = ops::add(x, Tensor::from({batch, len, cfg_.d_model}, std::move(tiled)));
  }
  Tensor h = mha.forward(ops::mask_rows(x, mask), mask, ctx);
  for (const auto& layer : accn) h = layer.forward(h, mask);
  return h;
}

}  // namespace ecnet
