#include <doctest.h>

#include <cmath>
#include <random>

#include "ecnet/heads.hpp"
#include "ecnet/loss.hpp"
#include "ecnet/ops.hpp"
#include "support/grad_check.hpp"
#include "support/oracles.hpp"

using namespace ecnet;
using ecnet::testing::grad_check;

namespace {

using Vec = std::vector<double>;

Tensor randn(Shape shape, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  Vec v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

void zero(Conv1d& c) {
  for (auto& v : c.weight.mutable_data()) v = 0;
  for (auto& v : c.bias.mutable_data()) v = 0;
}

// Head output for one sequence from explicit values.
HeadOutput make_output(std::size_t n, std::size_t classes, Vec probs, Vec left, Vec right,
                       bool grad = false) {
  return {Tensor::from({1, n, classes}, std::move(probs), grad),
          Tensor::from({1, n, 1}, std::move(left), grad),
          Tensor::from({1, n, 1}, std::move(right), grad)};
}

}  // namespace

TEST_CASE("classification head reference values") {
  std::mt19937_64 rng(1);
  ParameterSet ps;
  DetectHeads heads(ps, 8, 4, 3, true, rng);
  auto h = randn({1, 3, 8}, rng);

  zero(heads.cls);
  auto uniform = heads.classify(h);
  for (double p : uniform.data()) CHECK(p == doctest::Approx(0.2).epsilon(1e-12));

  heads.cls.bias.mutable_data()[0] = 2.0;
  auto peaked = heads.classify(h);
  const double z = std::exp(2.0) + 4.0;
  CHECK(peaked.at(0) == doctest::Approx(std::exp(2.0) / z).epsilon(1e-12));
  CHECK(peaked.at(0) == doctest::Approx(0.6488).epsilon(1e-4));
  for (std::size_t j = 1; j < 5; ++j) CHECK(peaked.at(j) == doctest::Approx(0.0878).epsilon(1e-3));

  // Negative logits are clamped by the ReLU, raising their class to the floor.
  heads.cls.bias.mutable_data()[1] = -30.0;
  auto clamped = heads.classify(h);
  CHECK(clamped.at(1) == doctest::Approx(1.0 / z).epsilon(1e-12));
}

TEST_CASE("classification without the logit ReLU") {
  std::mt19937_64 rng(2);
  ParameterSet ps;
  DetectHeads heads(ps, 8, 1, 3, false, rng);
  zero(heads.cls);
  heads.cls.bias.mutable_data()[1] = -30.0;
  auto p = heads.classify(randn({1, 2, 8}, rng));
  CHECK(p.at(1) < 1e-12);
}

TEST_CASE("probability floor implied by clamped logits") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    ParameterSet ps;
    const std::size_t c = 1 + rng() % 4;
    DetectHeads heads(ps, 6, c, 3, true, rng);
    auto h = randn({2, 5, 6}, rng, 3.0);
    auto p = heads.classify(h);
    // Rebuild post-ReLU logits to get z_max per position.
    auto logits = ops::relu(heads.cls(h));
    for (std::size_t pos = 0; pos < 10; ++pos) {
      double zmax = 0, total = 0;
      for (std::size_t j = 0; j <= c; ++j) zmax = std::max(zmax, logits.at(pos * (c + 1) + j));
      for (std::size_t j = 0; j <= c; ++j) {
        const double v = p.at(pos * (c + 1) + j);
        CHECK(v >= 1.0 / (static_cast<double>(c + 1) * std::exp(zmax)) * (1 - 1e-12));
        CHECK(v < 1.0);
        total += v;
      }
      CHECK(std::abs(total - 1) <= 1e-6);
    }
  }
}

TEST_CASE("offset heads") {
  std::mt19937_64 rng(4);
  ParameterSet ps;
  DetectHeads heads(ps, 5, 2, 3, true, rng);
  auto h = randn({1, 4, 5}, rng);

  SUBCASE("match conv oracle followed by max(., 0)") {
    auto [l, r] = heads.offsets(h);
    const Vec x(h.data().begin(), h.data().end());
    const auto lref = ecnet::testing::conv1d_loop(
        x, {heads.left.weight.data().begin(), heads.left.weight.data().end()},
        {heads.left.bias.data().begin(), heads.left.bias.data().end()}, 4, 5, 1, 3);
    const auto rref = ecnet::testing::conv1d_loop(
        x, {heads.right.weight.data().begin(), heads.right.weight.data().end()},
        {heads.right.bias.data().begin(), heads.right.bias.data().end()}, 4, 5, 1, 3);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(l.at(i) == doctest::Approx(std::max(lref[i], 0.0)).epsilon(1e-12));
      CHECK(r.at(i) == doctest::Approx(std::max(rref[i], 0.0)).epsilon(1e-12));
    }
  }
  SUBCASE("zero and negative-bias parameters give zero offsets") {
    zero(heads.left);
    zero(heads.right);
    auto [l0, r0] = heads.offsets(h);
    for (std::size_t i = 0; i < 4; ++i) CHECK((l0.at(i) == 0 && r0.at(i) == 0));
    heads.left.bias.mutable_data()[0] = -5;
    auto [l1, r1] = heads.offsets(h);
    for (std::size_t i = 0; i < 4; ++i) CHECK(l1.at(i) == 0);
  }
  SUBCASE("offsets are nonnegative under fuzzing") {
    for (int trial = 0; trial < 50; ++trial) {
      auto [l, r] = heads.offsets(randn({2, 6, 5}, rng, 5.0));
      for (double v : l.data()) CHECK(v >= 0);
      for (double v : r.data()) CHECK(v >= 0);
    }
  }
}

TEST_CASE("smooth L1 and boundary loss values") {
  CHECK(smooth_l1(2, 2) == 0.0);
  CHECK(std::abs(smooth_l1(3, 2.5) - 0.125) <= 1e-12);
  CHECK(std::abs(smooth_l1(5, 2) - 2.5) <= 1e-12);
  CHECK(std::abs(smooth_l1(1, 0) - 0.5) <= 1e-12);
  CHECK(std::abs(smooth_l1(1, std::nextafter(0.0, 1.0)) - 0.5) <= 1e-12);

  auto bl = [](std::size_t L, std::size_t R, double lh, double rh) {
    PositionTarget t{L, R, 1};
    Candidate c{0, {}, lh, rh};
    return boundary_loss(t, c);
  };
  CHECK(bl(1, 1, 1, 1) == 0.0);
  CHECK(std::abs(bl(0, 1, 0.5, 1.5) - 0.25) <= 1e-12);
  CHECK(std::abs(bl(2, 0, 0, 0) - 1.5) <= 1e-12);
}

TEST_CASE("focal loss values and limits") {
  CHECK(focal_loss(1, 1.0, 0.05, 2) < 1e-12);
  CHECK(focal_loss(1, 0.3, 1.0, 0.0) == doctest::Approx(-std::log(0.3)).epsilon(1e-12));
  CHECK(std::abs(focal_loss(1, 0.5, 0.05, 2) - 0.05 * 0.25 * std::log(2.0)) <= 1e-12);
  CHECK(focal_loss(0, 0.4, 0.05, 2) > 0);
  CHECK(std::isfinite(focal_loss(1, 0.0, 0.05, 2)));
  CHECK(std::isfinite(focal_loss(0, 1.0, 0.05, 2)));
}

TEST_CASE("focal loss is monotone in the predicted probability") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(1e-6, 1 - 1e-6);
  for (int trial = 0; trial < 2000; ++trial) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    if (a == b) continue;
    CHECK(focal_loss(1, a, 0.05, 2) >= focal_loss(1, b, 0.05, 2));
    CHECK(focal_loss(0, a, 0.05, 2) <= focal_loss(0, b, 0.05, 2));
  }
}

TEST_CASE("entity loss against a scripted evaluation") {
  // n = 2, c = 1: position 0 is a one-token entity, position 1 non-entity.
  const double a = 0.05, g = 2, beta = 10;
  const double p0e = 0.7, p0n = 0.3, p1e = 0.2, p1n = 0.8;
  const double l0 = 0.4, r0 = 1.8, l1 = 0.9, r1 = 3.0;
  auto pos = [&](double p) { return -a * std::pow(1 - p, g) * std::log(p); };
  auto neg = [&](double p) { return (a - 1) * std::pow(p, g) * std::log(1 - p); };
  const double focal = pos(p0e) + neg(p0n) + neg(p1e) + pos(p1n);
  const double bound = 0.5 * 0.4 * 0.4 + (1.8 - 0.5);
  const double expected = beta / 2 * focal + bound / 1;

  const std::vector<PositionTarget> targets = {{0, 0, 1}, {0, 0, 0}};
  const std::vector<std::uint8_t> mask = {1, 1};
  LossConfig cfg;
  LossParts parts;
  auto out = make_output(2, 2, {p0e, p0n, p1e, p1n}, {l0, l1}, {r0, r1});
  const double got = entity_loss(out, targets, mask, cfg, &parts).item();
  CHECK(std::abs(got - expected) <= 1e-12);
  CHECK(parts.positions == 2);
  CHECK(parts.entity_positions == 1);
  CHECK(std::abs(parts.boundary - bound) <= 1e-12);

  const auto scalar = entity_loss(targets, out.candidates(0, 2), cfg);
  CHECK(std::abs(scalar.total() - expected) <= 1e-12);

  cfg.focal_mode = FocalMode::kGoldOnly;
  const double gold_only = beta / 2 * (pos(p0e) + pos(p1n)) + bound;
  CHECK(std::abs(entity_loss(out, targets, mask, cfg).item() - gold_only) <= 1e-12);
}

TEST_CASE("entity loss edge cases") {
  LossConfig cfg;
  const std::vector<std::uint8_t> mask = {1, 1, 1};
  SUBCASE("no entity positions leaves only the focal part") {
    const std::vector<PositionTarget> targets(3);
    auto out = make_output(3, 3, {0.2, 0.2, 0.6, 0.1, 0.1, 0.8, 0.3, 0.3, 0.4}, {5, 5, 5}, {5, 5, 5});
    LossParts parts;
    const double v = entity_loss(out, targets, mask, cfg, &parts).item();
    CHECK(parts.boundary == 0.0);
    CHECK(v == parts.classification);
  }
  SUBCASE("clamped-perfect predictions") {
    const std::vector<PositionTarget> targets = {{0, 1, 2}, {1, 0, 2}, {0, 0, 0}};
    auto out = make_output(3, 3, {0, 1, 0, 0, 1, 0, 0, 0, 1}, {0, 1, 0}, {1, 0, 0});
    CHECK(entity_loss(out, targets, mask, cfg).item() <= 1e-5);
  }
  SUBCASE("no real position is rejected") {
    const std::vector<PositionTarget> targets(3);
    const std::vector<std::uint8_t> none = {0, 0, 0};
    auto out = make_output(3, 2, Vec(6, 0.5), Vec(3, 0), Vec(3, 0));
    CHECK_THROWS(entity_loss(out, targets, none, cfg));
  }
}

TEST_CASE("entity loss properties on random batches") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 6, c = 1 + rng() % 3;
    Vec probs;
    for (std::size_t i = 0; i < n; ++i) {
      Vec row(c + 1);
      double total = 0;
      for (auto& v : row) total += (v = u(rng) + 1e-3);
      for (auto& v : row) probs.push_back(v / total);
    }
    Vec left(n), right(n);
    for (auto& v : left) v = 3 * u(rng);
    for (auto& v : right) v = 3 * u(rng);
    std::vector<PositionTarget> targets(n);
    std::vector<std::uint8_t> mask(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      if (rng() % 2) targets[i] = {rng() % 3, rng() % 3, 1 + static_cast<int>(rng() % c)};
    }
    mask[n - 1] = 0;
    LossConfig cfg;
    auto out = make_output(n, c + 1, probs, left, right, true);
    LossParts parts;
    Tensor loss = entity_loss(out, targets, mask, cfg, &parts);
    CHECK(loss.item() >= 0);
    loss.backward();
    for (std::size_t i = 0; i < n; ++i) {
      if (!targets[i].is_entity() || !mask[i]) {
        CHECK(out.left.grad()[i] == 0.0);
        CHECK(out.right.grad()[i] == 0.0);
      }
      if (!mask[i]) {
        for (std::size_t j = 0; j <= c; ++j) CHECK(out.probs.grad()[i * (c + 1) + j] == 0.0);
      }
    }

    LossConfig doubled = cfg;
    doubled.beta = 2 * cfg.beta;
    LossParts parts2;
    const double v2 = entity_loss(out, targets, mask, doubled, &parts2).item();
    CHECK((v2 - parts2.boundary) == doctest::Approx(2 * (loss.item() - parts.boundary)).epsilon(1e-12));
  }
}

TEST_CASE("finite-difference gradients through heads and entity loss") {
  std::mt19937_64 rng(7);
  ParameterSet ps;
  DetectHeads heads(ps, 6, 2, 3, true, rng);
  // Positive logit offset keeps pre-activations away from the ReLU kink.
  for (auto& v : heads.cls.bias.mutable_data()) v = 1.5;
  for (auto& v : heads.left.bias.mutable_data()) v = 1.0;
  for (auto& v : heads.right.bias.mutable_data()) v = 1.0;
  auto h = randn({2, 4, 6}, rng, 0.5);
  std::vector<Tensor> inputs = {h};
  for (auto& p : ps.entries()) inputs.push_back(p.value);

  SUBCASE("classification head") {
    auto r = grad_check([&] {
      std::mt19937_64 w(5);
      auto p = heads.classify(h);
      return ops::sum(ops::mul(p, randn(p.shape(), w)));
    }, inputs);
    INFO(r.worst);
    CHECK(r.ok);
  }
  SUBCASE("offset heads") {
    auto r = grad_check([&] {
      auto [l, rr] = heads.offsets(h);
      return ops::sum(ops::add(ops::mul(l, l), ops::scale(rr, 0.7)));
    }, inputs);
    INFO(r.worst);
    CHECK(r.ok);
  }
  SUBCASE("entity loss end to end") {
    const std::vector<PositionTarget> targets = {{0, 1, 1}, {1, 0, 1}, {0, 0, 0}, {0, 0, 0},
                                                 {0, 0, 2}, {0, 2, 1}, {1, 1, 1}, {0, 0, 0}};
    const std::vector<std::uint8_t> mask = {1, 1, 1, 1, 1, 1, 1, 0};
    auto r = grad_check([&] { return entity_loss(heads.forward(h), targets, mask, LossConfig{}); },
                        inputs);
    INFO(r.worst);
    CHECK(r.ok);
  }
}
