#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "spluad/core/rng.hpp"
#include "spluad/core/tensor.hpp"

namespace spluad::prompt {

struct KMeansResult {
  Tensor centers;                      // [K, d]
  std::vector<std::size_t> assignment; // cluster per point
  std::vector<double> inertia_history; // one entry per assignment step
  std::size_t iterations = 0;
  bool converged = false;

  double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }

  std::vector<std::size_t> cluster_sizes() const {
    std::vector<std::size_t> sizes(centers.rows(), 0);
    for (std::size_t a : assignment) ++sizes[a];
    return sizes;
  }
};

struct KMeansOptions {
  std::size_t max_iterations = 100;
  std::size_t restarts = 10;  // independent seedings; the lowest final inertia wins
};

namespace kmeans_detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline double cost(const Tensor& points, const Tensor& centers, const std::vector<std::size_t>& a) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) total += sq_dist(points.row(i), centers.row(a[i]));
  return total;
}

// Nearest center per point; ties go to the lowest index. Empty clusters are
// reseeded at the point farthest from its own center.
inline std::vector<std::size_t> assign(const Tensor& points, Tensor& centers) {
  const std::size_t n = points.rows(), k = centers.rows();
  std::vector<std::size_t> a(n);
  std::vector<double> dist(n);
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double d = sq_dist(points.row(i), centers.row(c));
      if (d < best) {
        best = d;
        a[i] = c;
      }
    }
    dist[i] = best;
    ++sizes[a[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] > 0) continue;
    std::size_t far = n;
    for (std::size_t i = 0; i < n; ++i)
      if (sizes[a[i]] > 1 && (far == n || dist[i] > dist[far])) far = i;
    if (far == n) continue;  // only reachable with duplicate points
    --sizes[a[far]];
    a[far] = c;
    ++sizes[c];
    dist[far] = 0.0;
    std::copy(points.row(far).begin(), points.row(far).end(), centers.row(c).begin());
  }
  return a;
}

inline Tensor means(const Tensor& points, const Tensor& previous, const std::vector<std::size_t>& a) {
  const std::size_t k = previous.rows(), d = points.cols();
  Tensor sums({k, d});
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto s = sums.row(a[i]);
    const auto p = points.row(i);
    for (std::size_t j = 0; j < d; ++j) s[j] += p[j];
    ++counts[a[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    auto s = sums.row(c);
    if (counts[c] == 0) {
      std::copy(previous.row(c).begin(), previous.row(c).end(), s.begin());
      continue;
    }
    for (double& v : s) v /= static_cast<double>(counts[c]);
  }
  return sums;
}

// k-means++: first center uniform, then proportional to squared distance.
inline Tensor plus_plus_seed(const Tensor& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows(), d = points.cols();
  Tensor centers({k, d});
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.index(n);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(points.row(pick).begin(), points.row(pick).end(), centers.row(c).begin());
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], sq_dist(points.row(i), centers.row(c)));
      total += best[i];
    }
    if (total <= 0.0) {
      pick = rng.index(n);
      continue;
    }
    double r = rng.uniform() * total;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (best[i] <= 0.0) continue;
      r -= best[i];
      if (r < 0.0) {
        pick = i;
        break;
      }
    }
    while (best[pick] <= 0.0 && pick > 0) --pick;
  }
  return centers;
}

}  // namespace kmeans_detail

namespace kmeans_detail {

inline KMeansResult lloyd(const Tensor& points, std::size_t k, Rng& rng, std::size_t max_iterations) {
  KMeansResult r;
  r.centers = plus_plus_seed(points, k, rng);
  r.assignment = assign(points, r.centers);
  r.inertia_history.push_back(cost(points, r.centers, r.assignment));
  for (std::size_t it = 0; it < max_iterations; ++it) {
    r.centers = means(points, r.centers, r.assignment);
    auto next = assign(points, r.centers);
    r.inertia_history.push_back(cost(points, r.centers, next));
    ++r.iterations;
    if (next == r.assignment) {
      r.converged = true;
      break;
    }
    r.assignment = std::move(next);
  }
  if (!r.converged) {
    r.centers = means(points, r.centers, r.assignment);
    r.inertia_history.push_back(cost(points, r.centers, r.assignment));
  }
  return r;
}

}  // namespace kmeans_detail

// Lloyd iterations from k-means++ seeding until the assignment stops changing
// or max_iterations is reached, repeated `restarts` times; the run with the
// lowest final inertia is returned (earliest on ties). Final centers are the
// means of the final assignment; within a run inertia is recorded after every
// assignment step and never increases.
inline KMeansResult kmeans(const Tensor& points, std::size_t k, std::uint64_t seed,
                           const KMeansOptions& options = {}) {
  using namespace kmeans_detail;
  require(points.rank() == 2, ErrorCode::dimension, "kmeans: points must be [n, d]");
  require(k >= 1, ErrorCode::input, "kmeans: K must be at least 1");
  require(points.rows() >= k, ErrorCode::input,
          "kmeans: need at least K points (n=" + std::to_string(points.rows()) +
              ", K=" + std::to_string(k) + ")");
  require(options.restarts >= 1, ErrorCode::parameter, "kmeans: restarts must be at least 1");
  Rng rng(seed);
  KMeansResult best;
  for (std::size_t run = 0; run < options.restarts; ++run) {
    Rng run_rng = rng.fork();
    auto r = lloyd(points, k, run_rng, options.max_iterations);
    if (run == 0 || r.inertia() < best.inertia()) best = std::move(r);
  }
  return best;
}

}  // namespace spluad::prompt
