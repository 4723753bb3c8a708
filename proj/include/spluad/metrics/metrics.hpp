#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "spluad/core/error.hpp"

namespace spluad::metrics {

// One scored sample. Scores are live scores in [0, 1]: high means bona fide.
struct ScoreRecord {
  std::string id;
  bool bona_fide = true;
  std::string label;   // fine label, e.g. "live", "physical_attack"
  std::string family;  // attack family, empty for bona fide
  double score = 0.0;
  double score_physical = 0.0;
  double score_digital = 0.0;
};

// Decision rule shared by every metric: score >= threshold is accepted as
// bona fide.
inline bool accepted(double score, double threshold) { return score >= threshold; }

struct AcerResult {
  double apcer = 0.0;  // attacks accepted
  double bpcer = 0.0;  // bona fide rejected
  double acer = 0.0;   // (apcer + bpcer) / 2
};

struct EerResult {
  double rate = 0.0;
  double threshold = 0.0;
};

struct RocPoint {
  double threshold;
  double apcer;
  double bpcer;
};

struct MetricsSummary {
  double acc = 0.0;
  double auc = 0.0;
  double eer = 0.0;
  double eer_threshold = 0.0;
  double threshold = 0.5;  // operating point of acc/apcer/bpcer/acer
  double apcer = 0.0;
  double bpcer = 0.0;
  double acer = 0.0;
  AcerResult at_eer_threshold;
  std::size_t n_bona_fide = 0;
  std::size_t n_attack = 0;
};

namespace detail {

struct Split {
  std::vector<double> bona;
  std::vector<double> attack;
};

inline Split split_scores(std::span<const ScoreRecord> records) {
  Split s;
  for (const auto& r : records) (r.bona_fide ? s.bona : s.attack).push_back(r.score);
  return s;
}

inline Split require_both(std::span<const ScoreRecord> records, const char* op) {
  auto s = split_scores(records);
  require(!s.bona.empty() && !s.attack.empty(), ErrorCode::input,
          std::string(op) + ": needs at least one bona fide and one attack record");
  return s;
}

// Fraction of sorted values >= t.
inline double frac_at_least(const std::vector<double>& sorted, double t) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), t);
  return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
}

}  // namespace detail

inline double accuracy(std::span<const ScoreRecord> records, double threshold) {
  require(!records.empty(), ErrorCode::input, "accuracy: empty input");
  std::size_t correct = 0;
  for (const auto& r : records) correct += (accepted(r.score, threshold) == r.bona_fide);
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

// Probability that a random bona fide record outscores a random attack,
// ties counting one half. Computed from sorted ranks.
inline double auc(std::span<const ScoreRecord> records) {
  auto s = detail::require_both(records, "auc");
  std::sort(s.attack.begin(), s.attack.end());
  double wins = 0.0;
  for (double b : s.bona) {
    const auto lo = std::lower_bound(s.attack.begin(), s.attack.end(), b);
    const auto hi = std::upper_bound(lo, s.attack.end(), b);
    wins += static_cast<double>(lo - s.attack.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(s.bona.size()) * static_cast<double>(s.attack.size()));
}

inline AcerResult acer(std::span<const ScoreRecord> records, double threshold) {
  auto s = detail::require_both(records, "acer");
  std::size_t accepted_attacks = 0, rejected_bona = 0;
  for (double a : s.attack) accepted_attacks += accepted(a, threshold);
  for (double b : s.bona) rejected_bona += !accepted(b, threshold);
  AcerResult r;
  r.apcer = static_cast<double>(accepted_attacks) / static_cast<double>(s.attack.size());
  r.bpcer = static_cast<double>(rejected_bona) / static_cast<double>(s.bona.size());
  r.acer = (r.apcer + r.bpcer) / 2.0;
  return r;
}

// Operating points at every distinct score plus one just above the maximum,
// in increasing threshold order: (apcer, bpcer) runs from (1, 0) to (0, 1).
inline std::vector<RocPoint> roc_points(std::span<const ScoreRecord> records) {
  auto s = detail::require_both(records, "roc_points");
  std::sort(s.bona.begin(), s.bona.end());
  std::sort(s.attack.begin(), s.attack.end());
  std::vector<double> thresholds;
  thresholds.reserve(records.size() + 1);
  for (const auto& r : records) thresholds.push_back(r.score);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::nextafter(thresholds.back(), std::numeric_limits<double>::infinity()));
  std::vector<RocPoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds)
    out.push_back({t, detail::frac_at_least(s.attack, t), 1.0 - detail::frac_at_least(s.bona, t)});
  return out;
}

// Equal error rate on the lower convex hull of the (apcer, bpcer) operating
// points: the crossing of the diagonal is linearly interpolated between the
// two hull vertices that bracket it, and the threshold is interpolated with
// the same weight.
inline EerResult eer(std::span<const ScoreRecord> records) {
  const auto pts = roc_points(records);
  // Hull vertices in increasing-threshold order (apcer non-increasing).
  std::vector<RocPoint> hull;
  for (const auto& p : pts) {
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull.back();
      // Walking from (1, 0) to (0, 1) the hull only turns clockwise; drop b
      // when a -> b -> p turns the other way or is straight.
      const double cross = (b.apcer - a.apcer) * (p.bpcer - a.bpcer) -
                           (b.bpcer - a.bpcer) * (p.apcer - a.apcer);
      if (cross >= 0.0) hull.pop_back();
      else break;
    }
    hull.push_back(p);
  }
  for (std::size_t i = 0; i + 1 < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[i + 1];
    const double da = a.apcer - a.bpcer;
    const double db = b.apcer - b.bpcer;
    if (da == 0.0) return {a.apcer, a.threshold};
    if (da > 0.0 && db <= 0.0) {
      const double f = da / (da - db);
      return {a.apcer + f * (b.apcer - a.apcer), a.threshold + f * (b.threshold - a.threshold)};
    }
  }
  const auto& last = hull.back();
  return {last.apcer, last.threshold};
}

inline MetricsSummary summarize(std::span<const ScoreRecord> records, double threshold = 0.5) {
  MetricsSummary m;
  m.threshold = threshold;
  m.acc = accuracy(records, threshold);
  m.auc = auc(records);
  const auto e = eer(records);
  m.eer = e.rate;
  m.eer_threshold = e.threshold;
  const auto a = acer(records, threshold);
  m.apcer = a.apcer;
  m.bpcer = a.bpcer;
  m.acer = a.acer;
  m.at_eer_threshold = acer(records, e.threshold);
  for (const auto& r : records) (r.bona_fide ? m.n_bona_fide : m.n_attack)++;
  return m;
}

}  // namespace spluad::metrics
