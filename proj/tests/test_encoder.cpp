#include <doctest.h>

#include <cmath>
#include <random>

#include "ecnet/encoder.hpp"
#include "ecnet/ops.hpp"
#include "support/grad_check.hpp"
#include "support/oracles.hpp"

using namespace ecnet;
using ecnet::testing::conv1d_loop;
using ecnet::testing::elu_ref;
using ecnet::testing::grad_check;
using ecnet::testing::sigmoid_ref;

namespace {

using Vec = std::vector<double>;

Vec vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor randn(Shape shape, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  Vec v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor probe(const Tensor& y) {
  std::mt19937_64 rng(123);
  return ops::sum(ops::mul(y, randn(y.shape(), rng)));
}

void set_all(ParameterSet& params, double value) {
  for (auto& p : params.entries()) {
    for (auto& v : p.value.mutable_data()) v = value;
  }
}

// Masked, same-padded GLU over one sequence, built from the loop oracle.
Vec glu_ref(const Vec& x, const Glu& g, std::size_t T, const std::vector<std::uint8_t>& mask) {
  const std::size_t din = g.a.weight.dim(1), dout = g.a.weight.dim(0), k = g.a.weight.dim(2);
  Vec xm = x;
  for (std::size_t t = 0; t < T; ++t) {
    if (!mask[t]) std::fill(xm.begin() + t * din, xm.begin() + (t + 1) * din, 0.0);
  }
  const Vec a = conv1d_loop(xm, vec(g.a.weight), vec(g.a.bias), T, din, dout, k);
  const Vec b = conv1d_loop(xm, vec(g.b.weight), vec(g.b.bias), T, din, dout, k);
  Vec y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * sigmoid_ref(b[i]);
  return y;
}

Vec accn_ref(const Vec& h, const AccnLayer& layer, std::size_t T, const std::vector<std::uint8_t>& mask) {
  std::vector<Vec> maps = {glu_ref(h, layer.reduce, T, mask)};
  for (const auto& phase : layer.phases) {
    const Vec& prev = maps.back();
    Vec g = glu_ref(prev, phase, T, mask);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = elu_ref(g[i]) + prev[i];
    maps.push_back(g);
  }
  Vec fused = maps[0];
  for (const auto& m : maps) {
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] = std::max(fused[i], m[i]);
  }
  Vec o = glu_ref(fused, layer.expand, T, mask);
  const std::size_t d = h.size() / T;
  Vec out(h.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = mask[i / d] ? elu_ref(elu_ref(o[i]) + h[i]) : 0.0;
  }
  return out;
}

EncoderConfig small_config() {
  EncoderConfig c;
  c.d_model = 16;
  c.heads = 4;
  c.n_mha_layers = 1;
  c.n_accn_layers = 1;
  c.dropout = 0.1;
  return c;
}

}  // namespace

TEST_CASE("encoder config invariants") {
  EncoderConfig c;
  CHECK(c.reduced_dim() == 128);
  c.heads = 7;
  CHECK_THROWS(c.validate());
  c = EncoderConfig{};
  c.rd = 0.3;
  CHECK_THROWS(c.validate());
  c = EncoderConfig{};
  c.accn_kernel = 4;
  CHECK_THROWS(c.validate());
  c = EncoderConfig{};
  c.use_accn = false;
  CHECK(c.total_mha_layers() == 6);
}

TEST_CASE("sinusoidal positional encoding") {
  auto pe = positional_encoding(50, 8);
  for (std::size_t i = 0; i < 8; ++i) CHECK(pe.at(i) == (i % 2 == 0 ? 0.0 : 1.0));
  for (double v : pe.data()) CHECK(std::abs(v) <= 1.0);
  for (std::size_t pos = 0; pos < 50; ++pos) CHECK(pe.at(pos * 8) == doctest::Approx(std::sin(pos)));
  CHECK_THROWS(positional_encoding(3, 5));
}

TEST_CASE("GLU gate examples") {
  std::mt19937_64 rng(1);
  ParameterSet params;
  Glu g(params, "g", 3, 3, 1, rng);
  auto x = randn({4, 3}, rng);
  for (auto& v : g.b.weight.mutable_data()) v = 0;
  for (auto& v : g.b.bias.mutable_data()) v = 0;
  auto half = g(x);
  auto a = g.a(x);
  for (std::size_t i = 0; i < half.numel(); ++i) CHECK(half.at(i) == doctest::Approx(0.5 * a.at(i)));

  for (auto& v : g.b.bias.mutable_data()) v = 20;
  for (auto& v : g.a.weight.mutable_data()) v = 0;
  for (auto& v : g.a.bias.mutable_data()) v = 0;
  for (std::size_t c = 0; c < 3; ++c) g.a.weight.mutable_data()[c * 3 + c] = 1;
  auto pass = g(x);
  for (std::size_t i = 0; i < pass.numel(); ++i) CHECK(std::abs(pass.at(i) - x.at(i)) <= 1e-8 * 5);
}

TEST_CASE("GLU matches two conv oracles") {
  std::mt19937_64 rng(2);
  ParameterSet params;
  Glu g(params, "g", 3, 2, 3, rng);
  auto x = randn({5, 3}, rng);
  const Vec ref = glu_ref(vec(x), g, 5, std::vector<std::uint8_t>(5, 1));
  auto y = g(x);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.at(i) == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("ACCN with all-zero parameters collapses to ELU of its input") {
  std::mt19937_64 rng(3);
  ParameterSet params;
  AccnLayer layer(params, "accn", small_config(), rng);
  set_all(params, 0.0);
  auto h = randn({1, 5, 16}, rng);
  const std::vector<std::uint8_t> mask(5, 1);
  auto y = layer.forward(h, mask);
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.at(i) == doctest::Approx(elu_ref(h.at(i))));
}

TEST_CASE("ACCN layer matches the step-by-step oracle") {
  std::mt19937_64 rng(4);
  ParameterSet params;
  AccnLayer layer(params, "accn", small_config(), rng);
  CHECK(layer.phases.size() == 3);
  auto h = randn({1, 5, 16}, rng);
  const std::vector<std::uint8_t> mask = {1, 1, 1, 1, 0};
  const Vec ref = accn_ref(vec(h), layer, 5, mask);
  auto y = layer.forward(h, mask);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.at(i) == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("full-scale ACCN phase width") {
  std::mt19937_64 rng(5);
  ParameterSet params;
  AccnLayer layer(params, "accn", EncoderConfig{}, rng);
  CHECK(layer.reduce.a.weight.shape() == Shape{128, 512, 1});
  for (const auto& p : layer.phases) CHECK(p.a.weight.shape() == Shape{128, 128, 3});
  CHECK(layer.expand.a.weight.shape() == Shape{512, 128, 1});
}

TEST_CASE("single-token attention layer reduces to the value path") {
  std::mt19937_64 rng(6);
  ParameterSet params;
  auto cfg = small_config();
  MhaLayer layer(params, "mha", cfg, rng);
  for (auto& v : layer.ln_gamma.mutable_data()) v = 1.3;
  for (auto& v : layer.ln_beta.mutable_data()) v = -0.2;
  auto x = randn({1, 1, 16}, rng);
  const std::vector<std::uint8_t> mask = {1};
  auto y = layer.forward(x, mask, ForwardContext{});
  auto value_path = ops::linear(ops::linear(x, layer.wv, layer.bv), layer.wo, layer.bo);
  auto ref = ops::layer_norm(ops::add(x, value_path), layer.ln_gamma, layer.ln_beta);
  for (std::size_t i = 0; i < 16; ++i) CHECK(y.at(i) == doctest::Approx(ref.at(i)).epsilon(1e-12));
}

TEST_CASE("padded positions produce zero output and receive zero gradient") {
  std::mt19937_64 rng(7);
  ParameterSet params;
  auto cfg = small_config();
  Encoder enc(params, cfg, 6, rng);
  auto emb = randn({2, 4, 6}, rng);
  emb.set_requires_grad(true);
  const std::vector<std::uint8_t> mask = {1, 1, 1, 1, 1, 1, 0, 0};
  auto y = enc.forward(emb, mask, ForwardContext{});
  CHECK(y.shape() == Shape{2, 4, 16});
  probe(y).backward();
  for (std::size_t t = 6; t < 8; ++t) {
    for (std::size_t j = 0; j < 16; ++j) CHECK(y.at(t * 16 + j) == 0.0);
    for (std::size_t j = 0; j < 6; ++j) CHECK(emb.grad()[t * 6 + j] == 0.0);
  }
  // Padding content never leaks into real positions.
  auto emb2 = emb.detach();
  for (std::size_t j = 0; j < 12; ++j) emb2.mutable_data()[6 * 6 + j] = 1e3;
  auto y2 = enc.forward(emb2, mask, ForwardContext{});
  for (std::size_t i = 0; i < 6 * 16; ++i) CHECK(y2.at(i) == y.at(i));
  const std::vector<std::uint8_t> empty = {1, 1, 1, 1, 0, 0, 0, 0};
  CHECK_THROWS(enc.forward(emb, empty, ForwardContext{}));
}

TEST_CASE("attention stack is permutation-equivariant without positional encoding") {
  std::mt19937_64 rng(8);
  ParameterSet params;
  auto cfg = small_config();
  cfg.positional_encoding = false;
  Encoder enc(params, cfg, 6, rng);
  auto emb = randn({1, 4, 6}, rng);
  auto swapped = emb.detach();
  auto s = swapped.mutable_data();
  for (std::size_t j = 0; j < 6; ++j) std::swap(s[0 * 6 + j], s[2 * 6 + j]);
  const std::vector<std::uint8_t> mask(4, 1);
  auto y = enc.mha.forward(ops::linear(emb, enc.proj_w, enc.proj_b), mask, ForwardContext{});
  auto ys = enc.mha.forward(ops::linear(swapped, enc.proj_w, enc.proj_b), mask, ForwardContext{});
  const std::size_t perm[4] = {2, 1, 0, 3};
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t j = 0; j < 16; ++j) {
      CHECK(ys.at(t * 16 + j) == doctest::Approx(y.at(perm[t] * 16 + j)).epsilon(1e-12));
    }
  }
  // With positional encoding, identical tokens at different positions differ.
  ParameterSet params_pe;
  Encoder enc_pe(params_pe, small_config(), 6, rng);
  auto same = randn({1, 1, 6}, rng);
  Vec rows;
  for (int r = 0; r < 4; ++r) rows.insert(rows.end(), same.data().begin(), same.data().end());
  auto repeated = Tensor::from({1, 4, 6}, rows);
  auto out = enc_pe.forward(repeated, mask, ForwardContext{});
  bool differs = false;
  for (std::size_t j = 0; j < 16; ++j) differs = differs || out.at(j) != out.at(2 * 16 + j);
  CHECK(differs);
}

TEST_CASE("no-ACCN variant holds total depth with attention layers") {
  std::mt19937_64 rng(9);
  auto cfg = small_config();
  cfg.n_mha_layers = 2;
  cfg.n_accn_layers = 3;
  cfg.use_accn = false;
  ParameterSet params;
  Encoder enc(params, cfg, 6, rng);
  CHECK(enc.mha.layers.size() == 5);
  CHECK(enc.accn.empty());
}

TEST_CASE("finite-difference gradients through encoder layers") {
  std::mt19937_64 rng(10);
  auto cfg = small_config();
  const std::vector<std::uint8_t> mask = {1, 1, 1, 1, 1, 1, 1, 0};

  auto params_of = [](ParameterSet& ps, std::vector<Tensor> extra) {
    for (auto& p : ps.entries()) extra.push_back(p.value);
    return extra;
  };

  SUBCASE("conv1d layer") {
    ParameterSet ps;
    Conv1d conv(ps, "c", 5, 3, 3, rng);
    auto x = randn({2, 4, 5}, rng);
    auto r = grad_check([&] { return probe(conv(x)); }, params_of(ps, {x}));
    INFO(r.worst);
    CHECK(r.ok);
  }
  SUBCASE("GLU") {
    ParameterSet ps;
    Glu g(ps, "g", 5, 4, 3, rng);
    auto x = randn({2, 4, 5}, rng);
    auto r = grad_check([&] { return probe(g(x)); }, params_of(ps, {x}));
    INFO(r.worst);
    CHECK(r.ok);
  }
  SUBCASE("attention layer with dropout") {
    ParameterSet ps;
    MhaLayer layer(ps, "m", cfg, rng);
    auto x = randn({2, 4, 16}, rng);
    auto r = grad_check([&] {
      std::mt19937_64 drop(77);
      return probe(layer.forward(x, mask, ForwardContext{true, &drop}));
    }, params_of(ps, {x}));
    INFO(r.worst);
    CHECK(r.ok);
  }
  SUBCASE("ACCN layer") {
    ParameterSet ps;
    AccnLayer layer(ps, "a", cfg, rng);
    auto x = randn({2, 4, 16}, rng);
    auto r = grad_check([&] { return probe(layer.forward(x, mask)); }, params_of(ps, {x}));
    INFO(r.worst);
    CHECK(r.ok);
  }
  SUBCASE("projection + attention + ACCN end to end") {
    ParameterSet ps;
    Encoder enc(ps, cfg, 5, rng);
    auto x = randn({2, 4, 5}, rng);
    auto r = grad_check([&] { return probe(enc.forward(x, mask, ForwardContext{})); },
                        params_of(ps, {x}));
    INFO(r.worst);
    CHECK(r.ok);
  }
}
