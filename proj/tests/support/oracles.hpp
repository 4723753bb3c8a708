#pragma once

// Brute-force references for metrics and clustering. They share only the
// acceptance tie rule (score == threshold counts as bona fide) with the
// library and none of its code.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "spluad/core/tensor.hpp"

namespace spluad::testing {

struct LabeledScores {
  std::vector<double> bona;
  std::vector<double> attack;
};

inline double oracle_auc(const LabeledScores& s) {
  double wins = 0.0;
  for (double b : s.bona)
    for (double a : s.attack) wins += b > a ? 1.0 : (b == a ? 0.5 : 0.0);
  return wins / static_cast<double>(s.bona.size() * s.attack.size());
}

struct OracleRates {
  double apcer, bpcer;
};

inline OracleRates oracle_rates(const LabeledScores& s, double t) {
  double acc_attack = 0.0, rej_bona = 0.0;
  for (double a : s.attack) acc_attack += a >= t;
  for (double b : s.bona) rej_bona += b < t;
  return {acc_attack / static_cast<double>(s.attack.size()), rej_bona / static_cast<double>(s.bona.size())};
}

inline double oracle_accuracy(const LabeledScores& s, double t) {
  double ok = 0.0;
  for (double a : s.attack) ok += a < t;
  for (double b : s.bona) ok += b >= t;
  return ok / static_cast<double>(s.attack.size() + s.bona.size());
}

// Every achievable operating point: one threshold at each score and one
// above all of them.
inline std::vector<OracleRates> oracle_operating_points(const LabeledScores& s) {
  std::vector<double> ts = s.bona;
  ts.insert(ts.end(), s.attack.begin(), s.attack.end());
  ts.push_back(std::numeric_limits<double>::infinity());
  std::vector<OracleRates> out;
  for (double t : ts) out.push_back(oracle_rates(s, t));
  return out;
}

// Lowest point where any chord between two operating points (or a point
// itself) meets the diagonal apcer == bpcer. Mixing two operating points at
// random realizes every chord, so this is the best equal-error rate any
// randomized classifier built on these scores can reach.
inline double oracle_eer(const LabeledScores& s) {
  const auto pts = oracle_operating_points(s);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& a : pts)
    for (const auto& b : pts) {
      const double fa = a.apcer - a.bpcer, fb = b.apcer - b.bpcer;
      if (fa == 0.0) best = std::min(best, a.apcer);
      if (fa < 0.0 && fb > 0.0) {
        const double w = fa / (fa - fb);
        best = std::min(best, a.apcer + w * (b.apcer - a.apcer));
      }
    }
  return best;
}

// Minimum inertia over every assignment of n points to k non-empty
// clusters (k^n enumeration; small n only).
inline double oracle_min_inertia(const Tensor& pts, std::size_t k) {
  const std::size_t n = pts.rows(), d = pts.cols();
  std::vector<std::size_t> a(n, 0);
  double best = std::numeric_limits<double>::infinity();
  for (;;) {
    std::vector<std::size_t> count(k, 0);
    for (auto c : a) ++count[c];
    if (std::all_of(count.begin(), count.end(), [](std::size_t c) { return c > 0; })) {
      std::vector<double> mean(k * d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[a[i] * d + j] += pts.at(i, j) / static_cast<double>(count[a[i]]);
      double cost = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) cost += std::pow(pts.at(i, j) - mean[a[i] * d + j], 2);
      best = std::min(best, cost);
    }
    std::size_t pos = 0;
    while (pos < n && ++a[pos] == k) a[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

// Same partition up to relabeling.
inline bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

}  // namespace spluad::testing
