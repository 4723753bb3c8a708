#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "spluad/train/augment.hpp"

namespace spluad::train {

struct CaaDecision {
  std::vector<double> disagreement;  // |p_phys - p_dig| per sample
  std::vector<double> weights;       // w_hard for selected samples, else 1
  std::vector<Directive> directives;

  std::size_t selected() const {
    return static_cast<std::size_t>(std::count(directives.begin(), directives.end(), Directive::strong));
  }
};

// Hard samples are those whose two branches disagree most about liveness.
// With m = floor(rho * n), a sample is selected when its disagreement is
// strictly greater than the (m+1)-th largest value, so ties at the cut are
// left out and at most m samples are picked.
inline CaaDecision caa_select(const std::vector<double>& p_physical, const std::vector<double>& p_digital,
                              double rho, double w_hard) {
  require(p_physical.size() == p_digital.size(), ErrorCode::dimension,
          "caa_select: branch probability lists differ in length");
  require(rho >= 0.0 && rho < 1.0, ErrorCode::parameter, "caa_select: rho must lie in [0, 1)");
  require(w_hard >= 1.0, ErrorCode::parameter, "caa_select: w_hard must be at least 1");
  const std::size_t n = p_physical.size();
  CaaDecision d;
  d.disagreement.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(p_physical[i] >= 0.0 && p_physical[i] <= 1.0 && p_digital[i] >= 0.0 && p_digital[i] <= 1.0,
            ErrorCode::input, "caa_select: probabilities must lie in [0, 1]");
    d.disagreement[i] = std::abs(p_physical[i] - p_digital[i]);
  }
  d.weights.assign(n, 1.0);
  d.directives.assign(n, Directive::light);
  const auto m = static_cast<std::size_t>(std::floor(rho * static_cast<double>(n)));
  if (m == 0) return d;
  std::vector<double> sorted = d.disagreement;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double cut = sorted[m];
  for (std::size_t i = 0; i < n; ++i)
    if (d.disagreement[i] > cut) {
      d.weights[i] = w_hard;
      d.directives[i] = Directive::strong;
    }
  return d;
}

}  // namespace spluad::train
