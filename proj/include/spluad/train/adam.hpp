#pragma once

#include <cmath>
#include <vector>

#include "spluad/nn/autograd.hpp"

namespace spluad::train {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Parameters without a
// gradient this step still advance their moments with a zero gradient.
class Adam {
 public:
  Adam(std::vector<nn::Var> params, AdamOptions options) : params_(std::move(params)), opt_(options) {
    require(opt_.learning_rate >= 0.0, ErrorCode::config, "learning rate must be non-negative");
    for (const auto& p : params_) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }

  std::size_t steps() const { return t_; }
  const AdamOptions& options() const { return opt_; }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      if (opt_.learning_rate == 0.0) continue;
      Tensor& w = p.mutable_value();
      const bool has = p.has_grad();
      const Tensor* g = has ? &p.node()->grad : nullptr;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = has ? (*g)[i] : 0.0;
        m_[k][i] = opt_.beta1 * m_[k][i] + (1.0 - opt_.beta1) * gi;
        v_[k][i] = opt_.beta2 * v_[k][i] + (1.0 - opt_.beta2) * gi * gi;
        w[i] -= opt_.learning_rate * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + opt_.epsilon);
      }
      require(w.all_finite(), ErrorCode::numeric, "Adam produced a non-finite value in " + p.name());
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::vector<nn::Var> params_;
  AdamOptions opt_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace spluad::train
