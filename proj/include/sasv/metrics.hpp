// sasv/metrics.hpp

// Copyright 2026  The sasv-toolkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sasv/errors.hpp"
#include "sasv/types.hpp"

namespace sasv {

struct ScoreRecord {
  std::optional<std::string> enrollment_id;
  std::string test_id;
  double score = 0.0;
  Label label = Label::kBonafide;
  std::optional<std::string> attack;

  friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

struct EerResult {
  double eer = 0.0;        // percent, [0, 100]
  double threshold = 0.0;  // operating point at or just above the crossing
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// One ROC operating point: scores >= threshold are accepted.
struct DetPoint {
  double threshold;
  double far;  // fraction of negatives accepted
  double frr;  // fraction of positives rejected
};

/**
   Operating points at every distinct score plus +inf, in increasing
   threshold order.  FRR is nondecreasing and FAR nonincreasing along the
   returned list; the first point always has FRR = 0 and FAR = 1, the last
   FRR = 1 and FAR = 0.
*/
inline std::vector<DetPoint> det_points(std::span<const double> positives,
                                        std::span<const double> negatives) {
  if (positives.empty() || negatives.empty())
    throw DataError("det_points: both score lists must be nonempty");
  std::vector<double> pos(positives.begin(), positives.end());
  std::vector<double> neg(negatives.begin(), negatives.end());
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> thresholds;
  thresholds.reserve(pos.size() + neg.size() + 1);
  std::merge(pos.begin(), pos.end(), neg.begin(), neg.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  std::vector<DetPoint> points;
  points.reserve(thresholds.size());
  std::size_t pos_below = 0, neg_below = 0;
  for (double t : thresholds) {
    while (pos_below < pos.size() && pos[pos_below] < t) ++pos_below;
    while (neg_below < neg.size() && neg[neg_below] < t) ++neg_below;
    points.push_back({t, static_cast<double>(neg.size() - neg_below) / nn,
                      static_cast<double>(pos_below) / np});
  }
  return points;
}

/**
   Equal error rate with linear interpolation between the two adjacent
   operating points where FRR - FAR changes sign.  Scores >= threshold are
   accepted.  Returned eer is in percent.
*/
inline EerResult compute_eer(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty())
    throw DataError("compute_eer: " + std::string(positives.empty() ? "positive" : "negative") +
                    " score list is empty");
  const auto points = det_points(positives, negatives);
  EerResult r;
  r.positives = positives.size();
  r.negatives = negatives.size();
  // points[0] has FRR 0 and FAR 1, so the crossing is never at index 0.
  for (std::size_t j = 1; j < points.size(); ++j) {
    const double d1 = points[j].frr - points[j].far;
    if (d1 < 0.0) continue;
    const DetPoint& p0 = points[j - 1];
    const DetPoint& p1 = points[j];
    double rate;
    if (d1 == 0.0) {
      rate = p1.frr;
    } else {
      const double d0 = p0.frr - p0.far;
      const double alpha = -d0 / (d1 - d0);
      rate = p0.frr + alpha * (p1.frr - p0.frr);
    }
    r.eer = 100.0 * rate;
    r.threshold = std::isfinite(p1.threshold) ? p1.threshold : p0.threshold;
    return r;
  }
  // Unreachable: the last point has FRR 1, FAR 0.
  throw std::logic_error("compute_eer: no crossing found");
}

inline std::vector<double> scores_where(std::span<const ScoreRecord> records,
                                        const std::function<bool(const ScoreRecord&)>& keep) {
  std::vector<double> out;
  for (const auto& r : records)
    if (keep(r)) out.push_back(r.score);
  return out;
}

struct SasvEers {
  EerResult sv;    // target vs nontarget
  EerResult spf;   // target vs spoof
  EerResult sasv;  // target vs nontarget + spoof
};

inline SasvEers sasv_eer_suite(std::span<const ScoreRecord> records) {
  std::vector<double> target, nontarget, spoof;
  for (const auto& r : records) {
    switch (r.label) {
      case Label::kTarget: target.push_back(r.score); break;
      case Label::kNontarget: nontarget.push_back(r.score); break;
      case Label::kSpoof: spoof.push_back(r.score); break;
      case Label::kBonafide:
        throw DataError("sasv_eer_suite: label 'bonafide' is not a SASV trial label (test " +
                        r.test_id + ")");
    }
  }
  if (target.empty()) throw DataError("sasv_eer_suite: no target trials");
  if (nontarget.empty()) throw DataError("sasv_eer_suite: no nontarget trials");
  if (spoof.empty()) throw DataError("sasv_eer_suite: no spoof trials");
  std::vector<double> impostors(nontarget);
  impostors.insert(impostors.end(), spoof.begin(), spoof.end());
  return {compute_eer(target, nontarget), compute_eer(target, spoof),
          compute_eer(target, impostors)};
}

/// Attack ids A07-A19 in report order.
inline std::vector<std::string> evaluation_attacks() {
  std::vector<std::string> ids;
  for (int a = 7; a <= 19; ++a) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "A%02d", a);
    ids.emplace_back(buf);
  }
  return ids;
}

struct CmBreakdown {
  EerResult pooled;
  std::vector<std::pair<std::string, EerResult>> per_attack;  // in attack-id order
  std::vector<std::string> warnings;

  const EerResult* find(const std::string& attack) const {
    for (const auto& [a, r] : per_attack)
      if (a == attack) return &r;
    return nullptr;
  }
};

/**
   Pooled CM EER plus one EER per attack (all bona fide vs that attack's
   spoofs).  If `expected_attacks` is given, attacks listed there but absent
   from the records are omitted and reported in `warnings`.
*/
inline CmBreakdown cm_breakdown(std::span<const ScoreRecord> records,
                                const std::vector<std::string>& expected_attacks = {}) {
  std::vector<double> bona, spoof;
  std::map<std::string, std::vector<double>> by_attack;
  for (const auto& r : records) {
    if (is_bona_fide(r.label)) {
      bona.push_back(r.score);
    } else {
      spoof.push_back(r.score);
      if (!r.attack) throw DataError("cm_breakdown: spoof record " + r.test_id + " has no attack id");
      by_attack[*r.attack].push_back(r.score);
    }
  }
  if (bona.empty()) throw DataError("cm_breakdown: no bona fide records");
  if (spoof.empty()) throw DataError("cm_breakdown: no spoof records");

  CmBreakdown out;
  out.pooled = compute_eer(bona, spoof);
  for (const auto& a : expected_attacks)
    if (!by_attack.count(a)) out.warnings.push_back("attack " + a + " has no records; omitted");
  for (const auto& [attack, scores] : by_attack)
    out.per_attack.emplace_back(attack, compute_eer(bona, scores));
  return out;
}

struct HistogramBin {
  double low;
  double high;
  std::map<Label, std::size_t> counts;
};

struct Histogram {
  std::vector<HistogramBin> bins;
  bool degenerate = false;  // all scores identical: one zero-width bin
};

/**
   Equal-width bins over [min, max] of all scores, per-label counts.  Bin k
   covers [low_k, high_k); the last bin also includes max.
*/
inline Histogram score_histogram(std::span<const ScoreRecord> records, std::size_t bin_count) {
  if (bin_count < 2) throw std::invalid_argument("score_histogram: bin count must be >= 2");
  if (records.empty()) throw DataError("score_histogram: no records");
  double lo = records[0].score, hi = records[0].score;
  for (const auto& r : records) {
    lo = std::min(lo, r.score);
    hi = std::max(hi, r.score);
  }
  Histogram h;
  if (lo == hi) {
    h.degenerate = true;
    h.bins.push_back({lo, hi, {}});
    for (const auto& r : records) ++h.bins[0].counts[r.label];
    return h;
  }
  std::map<Label, std::size_t> zeros;
  for (const auto& r : records) zeros[r.label] = 0;
  const double width = (hi - lo) / static_cast<double>(bin_count);
  auto edge = [&](std::size_t k) { return k == bin_count ? hi : lo + static_cast<double>(k) * width; };
  for (std::size_t k = 0; k < bin_count; ++k) h.bins.push_back({edge(k), edge(k + 1), zeros});
  for (const auto& r : records) {
    auto k = static_cast<std::size_t>(
        std::min<double>(std::floor((r.score - lo) / width), static_cast<double>(bin_count - 1)));
    // Settle rounding at the edges against the reported bin bounds.
    while (k > 0 && r.score < h.bins[k].low) --k;
    while (k + 1 < bin_count && r.score >= h.bins[k + 1].low) ++k;
    ++h.bins[k].counts[r.label];
  }
  return h;
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct MetricLine {
  std::string metric;
  std::string subset;
  double value;
};

/// `metric<TAB>subset<TAB>value`, full precision.
inline void write_metrics(std::ostream& os, std::span<const MetricLine> lines) {
  for (const auto& l : lines) os << l.metric << '\t' << l.subset << '\t' << format_real(l.value) << '\n';
}

/// `bin_low<TAB>bin_high<TAB>label<TAB>count`, one line per bin and label.
inline void write_histogram(std::ostream& os, const Histogram& h) {
  for (const auto& b : h.bins)
    for (const auto& [label, count] : b.counts)
      os << format_real(b.low) << '\t' << format_real(b.high) << '\t' << to_string(label) << '\t'
         << count << '\n';
}

/// `threshold<TAB>far<TAB>frr`.
inline void write_det_points(std::ostream& os, std::span<const DetPoint> points) {
  for (const auto& p : points)
    os << format_real(p.threshold) << '\t' << format_real(p.far) << '\t' << format_real(p.frr) << '\n';
}

}  // namespace sasv
