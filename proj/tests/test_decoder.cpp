#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "ecnet/decoder.hpp"
#include "support/oracles.hpp"

using namespace ecnet;

namespace {

Candidate cand(std::size_t pos, std::vector<double> probs, double l, double r) {
  return {pos, std::move(probs), l, r};
}

std::vector<EntitySpan> by_start(std::vector<EntitySpan> s) {
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  return s;
}

bool same(const std::vector<EntitySpan>& a, const std::vector<EntitySpan>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].same_entity(b[i]) || a[i].confidence != b[i].confidence) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("decode keeps the most confident of overlapping proposals") {
  // slots: PER, LOC, non-entity
  std::vector<Candidate> c = {cand(0, {0.9, 0.05, 0.05}, 0, 1), cand(1, {0.8, 0.1, 0.1}, 1, 0)};
  auto spans = decode(c, 2, 0.5);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].same_entity({0, 1, 1}));
  CHECK(spans[0].confidence == 0.9);

  CHECK(decode(c, 2, 0.95).empty());

  std::vector<Candidate> d = {cand(0, {0.9, 0.05, 0.05}, 0, 1), cand(1, {0.1, 0.1, 0.8}, 0, 0),
                              cand(2, {0.0, 0.95, 0.05}, 1, 0)};
  auto e = decode(d, 3, 0.5);
  REQUIRE(e.size() == 1);
  CHECK(e[0].same_entity({1, 2, 2}));
}

TEST_CASE("decode rounding, clamping and validation") {
  std::vector<Candidate> c = {cand(0, {0.6, 0.4}, 0.49, 0.5), cand(1, {0.3, 0.7}, 0, 0),
                              cand(2, {0.3, 0.7}, 0, 0), cand(3, {0.7, 0.3}, 9.0, 9.0)};
  auto spans = decode(c, 4, 0.0);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].same_entity({0, 3, 1}));  // the clamped span wins on confidence

  std::vector<Candidate> half = {cand(0, {0.3, 0.7}, 0, 0), cand(1, {0.9, 0.1}, 0.5, 0.5),
                                 cand(2, {0.3, 0.7}, 0, 0), cand(3, {0.3, 0.7}, 0, 0)};
  auto h = decode(half, 4, 0.5);
  REQUIRE(h.size() == 1);
  CHECK(h[0].same_entity({0, 2, 1}));  // 0.5 rounds away from zero

  CHECK_THROWS_AS(decode(half, 5, 0.5), std::invalid_argument);
}

TEST_CASE("decode ties break on position then type") {
  std::vector<Candidate> c = {cand(0, {0.3, 0.7}, 0, 0), cand(1, {0.5, 0.5}, 1, 0),
                              cand(2, {0.5, 0.5}, 2, 0)};
  // Position 1 and 2 both have confidence 0.5 (slot 0 wins argmax ties).
  auto spans = decode(c, 3, 0.5);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].same_entity({0, 1, 1}));
}

TEST_CASE("decode matches the brute-force oracle") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 10, c = 1 + rng() % 4;
    const auto cands = ecnet::testing::random_candidates(rng, n, c);
    const double threshold = 0.05 * static_cast<double>(rng() % 21);
    const auto got = decode(cands, n, threshold);
    CHECK(same(by_start(got), by_start(ecnet::testing::decode_oracle(cands, n, threshold))));
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].end < n);
      CHECK(got[i].start <= got[i].end);
      for (std::size_t j = i + 1; j < got.size(); ++j) CHECK(!got[i].overlaps(got[j]));
    }
  }
}

TEST_CASE("raising the threshold only removes spans") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 10, c = 1 + rng() % 4;
    const auto cands = ecnet::testing::random_candidates(rng, n, c);
    auto prev = decode(cands, n, 0.0);
    for (int step = 1; step <= 10; ++step) {
      auto next = decode(cands, n, 0.1 * step);
      for (const auto& s : next) {
        CHECK(std::any_of(prev.begin(), prev.end(), [&](const auto& p) { return p.same_entity(s); }));
      }
      prev = next;
    }
  }
}

TEST_CASE("span precision, recall and F1") {
  const std::vector<EntitySpan> gold = {{0, 1, 1}, {3, 3, 2}};
  auto p = span_prf(gold, gold);
  CHECK((p.precision == 1 && p.recall == 1 && p.f1 == 1));

  const std::vector<EntitySpan> half = {{0, 1, 1}, {3, 3, 1}};
  p = span_prf(half, gold);
  CHECK((p.precision == 0.5 && p.recall == 0.5 && p.f1 == 0.5));

  p = span_prf({}, {});
  CHECK((p.precision == 1 && p.recall == 1 && p.f1 == 1));
  CHECK(!p.precision_undefined);

  p = span_prf({}, gold);
  CHECK((p.precision == 0 && p.recall == 0 && p.f1 == 0));
  CHECK(p.precision_undefined);

  p = span_prf(gold, {});
  CHECK(p.recall_undefined);
  CHECK(p.precision == 0);

  CHECK(harmonic_f1(0.9411, 0.9135) == doctest::Approx(0.9271).epsilon(1e-4));
  CHECK(harmonic_f1(0, 0) == 0);
}

TEST_CASE("span scoring ignores list order and sentence order") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<EntitySpan>> preds, golds;
    PrfCounts forward;
    for (int s = 0; s < 5; ++s) {
      const std::size_t n = 1 + rng() % 10;
      preds.push_back(ecnet::testing::random_spans(rng, n, 2));
      golds.push_back(ecnet::testing::random_spans(rng, n, 2));
      forward += count_matches(preds.back(), golds.back());
    }
    PrfCounts backward;
    for (int s = 4; s >= 0; --s) {
      auto p = preds[s];
      std::reverse(p.begin(), p.end());
      backward += count_matches(p, golds[s]);
    }
    CHECK(forward.true_positives == backward.true_positives);
    CHECK(score(forward).f1 == score(backward).f1);
  }
}

TEST_CASE("threshold sweep") {
  std::mt19937_64 rng(44);
  std::vector<SentenceOutput> outputs;
  for (int s = 0; s < 20; ++s) {
    const std::size_t n = 1 + rng() % 10;
    outputs.push_back({ecnet::testing::random_candidates(rng, n, 3), ecnet::testing::random_spans(rng, n, 3)});
  }
  const auto grid = parse_thresholds("0.1:0.9:0.1");
  REQUIRE(grid.size() == 9);
  CHECK(grid.front() == doctest::Approx(0.1));
  CHECK(grid.back() == doctest::Approx(0.9));
  const auto rows = threshold_sweep(outputs, grid);
  REQUIRE(rows.size() == 9);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].counts.predicted <= rows[i - 1].counts.predicted);
    CHECK(rows[i].prf.recall <= rows[i - 1].prf.recall);
  }

  const std::vector<double> single = {0.35};
  const auto one = threshold_sweep(outputs, single);
  PrfCounts direct;
  for (const auto& o : outputs) direct += count_matches(decode(o.candidates, o.candidates.size(), 0.35), o.gold);
  CHECK(one[0].counts.true_positives == direct.true_positives);
  CHECK(one[0].counts.predicted == direct.predicted);

  const std::vector<double> descending = {0.5, 0.2};
  CHECK_THROWS(threshold_sweep(outputs, descending));
  CHECK(parse_thresholds("0.5") == std::vector<double>{0.5});
  CHECK_THROWS(parse_thresholds("0.9:0.1:0.1"));
  CHECK_THROWS(parse_thresholds("abc"));

  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "threshold,precision,recall,f1");
  std::size_t count = 0;
  while (std::getline(lines, line)) ++count;
  CHECK(count == 9);
}
