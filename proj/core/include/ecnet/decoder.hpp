#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ecnet/corpus.hpp"
#include "ecnet/heads.hpp"

namespace ecnet {

/// Turns per-position candidates into non-overlapping spans.
///
/// Each position proposes its argmax class (lowest slot on ties) with that
/// probability as confidence; non-entity and sub-threshold proposals are
/// dropped. Offsets are rounded half away from zero and the span clamped
/// into the sentence. Survivors are visited by descending confidence
/// (then position, then type) and kept iff they share no token with a span
/// already kept. Throws std::invalid_argument if cands.size() != n.
std::vector<EntitySpan> decode(std::span<const Candidate> cands, std::size_t n, double threshold);

struct PrfCounts {
  std::size_t true_positives = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;

  PrfCounts& operator+=(const PrfCounts& o) {
    true_positives += o.true_positives;
    predicted += o.predicted;
    gold += o.gold;
    return *this;
  }
};

struct Prf {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  // Set when the corresponding ratio had a zero denominator and was reported
  // as 0 (both sides empty reports 1 with the flags clear).
  bool precision_undefined = false;
  bool recall_undefined = false;
};

/// Exact (start, end, type) matches between two span lists.
PrfCounts count_matches(std::span<const EntitySpan> pred, std::span<const EntitySpan> gold);
Prf score(const PrfCounts& counts);
Prf span_prf(std::span<const EntitySpan> pred, std::span<const EntitySpan> gold);
/// 2PR / (P + R), 0 when P + R = 0.
double harmonic_f1(double precision, double recall);

struct SentenceOutput {
  std::vector<Candidate> candidates;
  std::vector<EntitySpan> gold;
};

struct SweepRow {
  double threshold = 0;
  PrfCounts counts;
  Prf prf;
};

/// Corpus-level scores for each threshold. Thresholds must be ascending.
std::vector<SweepRow> threshold_sweep(std::span<const SentenceOutput> outputs,
                                      std::span<const double> thresholds);

/// "start:stop:step", inclusive of stop up to rounding; or a single value.
std::vector<double> parse_thresholds(const std::string& range);

/// threshold,precision,recall,f1 with percentages to two decimals.
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);
void write_sweep_table(std::ostream& out, std::span<const SweepRow> rows);

}  // namespace ecnet
