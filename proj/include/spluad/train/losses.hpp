#pragma once

#include <utility>
#include <vector>

#include "spluad/nn/ops.hpp"

namespace spluad::train {

using nn::Var;

struct CeResult {
  Var loss;            // scalar; constant 0 when empty
  bool empty = false;  // no legal sample in the batch
};

// -log p(target) from logits, as a scalar.
inline Var cross_entropy(const Var& logits, std::size_t target) {
  return nn::scale(nn::element(nn::log_softmax(logits), target), -1.0);
}

// Weighted mean sum_i w_i l_i / sum_i w_i of per-sample cross-entropies.
inline CeResult weighted_ce(const std::vector<Var>& logits, const std::vector<std::size_t>& targets,
                            const std::vector<double>& weights) {
  require(logits.size() == targets.size() && logits.size() == weights.size(), ErrorCode::dimension,
          "weighted_ce: logits, targets and weights differ in length");
  CeResult r;
  if (logits.empty()) {
    r.loss = Var::constant(Tensor::scalar(0.0));
    r.empty = true;
    return r;
  }
  double total_w = 0.0;
  std::vector<Var> terms;
  terms.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    require(weights[i] > 0.0, ErrorCode::parameter, "weighted_ce: weights must be positive");
    terms.push_back(cross_entropy(logits[i], targets[i]));
    total_w += weights[i];
  }
  std::vector<double> w(weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = weights[i] / total_w;
  r.loss = nn::weighted_sum(terms, w);
  return r;
}

// mean_i (1 - cos(a_i, b_i)).
inline Var mean_cosine_distance(const std::vector<Var>& a, const std::vector<Var>& b) {
  require(a.size() == b.size() && !a.empty(), ErrorCode::dimension,
          "mean_cosine_distance: need equally many, non-zero, pairs");
  std::vector<Var> terms;
  terms.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) terms.push_back(nn::cosine_similarity(a[i], b[i]));
  const double w = 1.0 / static_cast<double>(a.size());
  // 1 - mean cos
  Var mean_cos = nn::weighted_sum(terms, std::vector<double>(terms.size(), w));
  return nn::scale(nn::sub(mean_cos, Var::constant(Tensor::scalar(1.0))), -1.0);
}

// (text term, visual term): prompted class features against their zero-shot
// peers, and prompted image features against the unprompted ones.
inline std::pair<Var, Var> consistency_loss(const std::vector<Var>& prompted_class,
                                            const std::vector<Var>& clip_class,
                                            const std::vector<Var>& prompted_visual,
                                            const std::vector<Var>& clip_visual) {
  return {mean_cosine_distance(prompted_class, clip_class),
          mean_cosine_distance(prompted_visual, clip_visual)};
}

}  // namespace spluad::train
