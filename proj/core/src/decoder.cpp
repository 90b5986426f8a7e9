#include "ecnet/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace ecnet {

namespace {

struct Proposal {
  EntitySpan span;
  std::size_t position;
};

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

std::vector<EntitySpan> decode(std::span<const Candidate> cands, std::size_t n, double threshold) {
  if (cands.size() != n) {
    throw std::invalid_argument("decode: " + std::to_string(cands.size()) +
                                " candidates for a sentence of " + std::to_string(n));
  }
  std::vector<Proposal> proposals;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& probs = cands[i].class_probs;
    if (probs.size() < 2) throw std::invalid_argument("decode: candidate needs c + 1 >= 2 slots");
    const auto best = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    if (best == probs.size() - 1) continue;  // non-entity
    const double conf = probs[best];
    if (conf < threshold) continue;
    const double left = std::round(cands[i].left_offset);
    const double right = std::round(cands[i].right_offset);
    const double lo = static_cast<double>(i) - left;
    const double hi = static_cast<double>(i) + right;
    const double last = static_cast<double>(n - 1);
    EntitySpan span;
    span.start = static_cast<std::size_t>(std::clamp(lo, 0.0, last));
    span.end = static_cast<std::size_t>(std::clamp(hi, 0.0, last));
    span.type_id = static_cast<int>(best) + 1;
    span.confidence = conf;
    proposals.push_back({span, i});
  }
  std::stable_sort(proposals.begin(), proposals.end(), [](const Proposal& a, const Proposal& b) {
    if (a.span.confidence != b.span.confidence) return a.span.confidence > b.span.confidence;
    if (a.position != b.position) return a.position < b.position;
    return a.span.type_id < b.span.type_id;
  });

  std::vector<EntitySpan> kept;
  std::vector<bool> taken(n, false);
  for (const auto& p : proposals) {
    bool free = true;
    for (std::size_t t = p.span.start; free && t <= p.span.end; ++t) free = !taken[t];
    if (!free) continue;
    for (std::size_t t = p.span.start; t <= p.span.end; ++t) taken[t] = true;
    kept.push_back(p.span);
  }
  return kept;
}

PrfCounts count_matches(std::span<const EntitySpan> pred, std::span<const EntitySpan> gold) {
  PrfCounts c;
  c.predicted = pred.size();
  c.gold = gold.size();
  std::vector<bool> used(gold.size(), false);
  for (const auto& p : pred) {
    for (std::size_t g = 0; g < gold.size(); ++g) {
      if (!used[g] && gold[g].same_entity(p)) {
        used[g] = true;
        ++c.true_positives;
        break;
      }
    }
  }
  return c;
}

double harmonic_f1(double precision, double recall) {
  return precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

Prf score(const PrfCounts& c) {
  Prf r;
  if (c.predicted == 0 && c.gold == 0) {
    r.precision = r.recall = r.f1 = 1.0;
    return r;
  }
  if (c.predicted == 0) {
    r.precision_undefined = true;
  } else {
    r.precision = static_cast<double>(c.true_positives) / static_cast<double>(c.predicted);
  }
  if (c.gold == 0) {
    r.recall_undefined = true;
  } else {
    r.recall = static_cast<double>(c.true_positives) / static_cast<double>(c.gold);
  }
  r.f1 = harmonic_f1(r.precision, r.recall);
  return r;
}

Prf span_prf(std::span<const EntitySpan> pred, std::span<const EntitySpan> gold) {
  return score(count_matches(pred, gold));
}

std::vector<SweepRow> threshold_sweep(std::span<const SentenceOutput> outputs,
                                      std::span<const double> thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw std::invalid_argument("threshold_sweep: thresholds must be ascending");
  }
  std::vector<SweepRow> rows;
  for (double t : thresholds) {
    SweepRow row;
    row.threshold = t;
    for (const auto& s : outputs) {
      const auto pred = decode(s.candidates, s.candidates.size(), t);
      row.counts += count_matches(pred, s.gold);
    }
    row.prf = score(row.counts);
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> parse_thresholds(const std::string& range) {
  auto parse = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw std::invalid_argument("bad threshold range '" + range + "'");
    return v;
  };
  const auto c1 = range.find(':');
  if (c1 == std::string::npos) return {parse(range)};
  const auto c2 = range.find(':', c1 + 1);
  if (c2 == std::string::npos) throw std::invalid_argument("threshold range needs start:stop:step");
  const double start = parse(range.substr(0, c1));
  const double stop = parse(range.substr(c1 + 1, c2 - c1 - 1));
  const double step = parse(range.substr(c2 + 1));
  if (!(step > 0) || stop < start) throw std::invalid_argument("bad threshold range '" + range + "'");
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(std::round((start + static_cast<double>(i) * step) * 1e9) / 1e9);
  }
  return out;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "threshold,precision,recall,f1\n";
  for (const auto& r : rows) {
    out << format("%g", r.threshold) << ',' << format("%.2f", 100 * r.prf.precision) << ','
        << format("%.2f", 100 * r.prf.recall) << ',' << format("%.2f", 100 * r.prf.f1) << '\n';
  }
}

void write_sweep_table(std::ostream& out, std::span<const SweepRow> rows) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-9s  %6s  %9s  %6s\n", "Threshold", "F1", "Precision", "Recall");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-9g  %6.2f  %9.2f  %6.2f\n", r.threshold, 100 * r.prf.f1,
                  100 * r.prf.precision, 100 * r.prf.recall);
    out << buf;
  }
}

}  // namespace ecnet
