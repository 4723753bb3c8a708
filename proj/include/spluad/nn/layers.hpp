#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "spluad/core/rng.hpp"
#include "spluad/nn/ops.hpp"

namespace spluad::nn {

// Visitor over named parameters; used for checkpoints, checksums and the
// optimizer's parameter list.
using ParamVisitor = std::function<void(const std::string& name, Var& param)>;

inline Var init_weight(std::size_t out, std::size_t in, Rng& rng) {
  return Var::constant(truncated_normal_tensor({out, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng));
}

inline Var init_zeros(Shape shape) { return Var::constant(Tensor(std::move(shape))); }
inline Var init_ones(Shape shape) { return Var::constant(Tensor(std::move(shape), 1.0)); }

struct LayerNormParams {
  Var gamma, beta;

  static LayerNormParams create(std::size_t d) { return {init_ones({d}), init_zeros({d})}; }

  void visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".gamma", gamma);
    fn(prefix + ".beta", beta);
  }
};

inline Var layer_norm(const Var& x, const LayerNormParams& p, double eps = 1e-5) {
  return layer_norm(x, p.gamma, p.beta, eps);
}

struct LinearParams {
  Var weight, bias;

  static LinearParams create(std::size_t out, std::size_t in, Rng& rng) {
    return {init_weight(out, in, rng), init_zeros({out})};
  }

  void visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".weight", weight);
    fn(prefix + ".bias", bias);
  }
};

inline Var linear(const Var& x, const LinearParams& p) { return linear(x, p.weight, p.bias); }

struct AttentionParams {
  LinearParams query, key, value, out;

  static AttentionParams create(std::size_t width, Rng& rng) {
    return {LinearParams::create(width, width, rng), LinearParams::create(width, width, rng),
            LinearParams::create(width, width, rng), LinearParams::create(width, width, rng)};
  }

  void visit(const std::string& prefix, const ParamVisitor& fn) {
    query.visit(prefix + ".query", fn);
    key.visit(prefix + ".key", fn);
    value.visit(prefix + ".value", fn);
    out.visit(prefix + ".out", fn);
  }
};

inline Var multi_head_attention(const Var& x, const AttentionParams& p, std::size_t heads,
                                bool causal) {
  require(heads > 0 && x.value().cols() % heads == 0, ErrorCode::config,
          "multi_head_attention: width " + std::to_string(x.value().cols()) +
              " not divisible by " + std::to_string(heads) + " heads");
  const Var q = linear(x, p.query);
  const Var k = linear(x, p.key);
  const Var v = linear(x, p.value);
  return linear(attention(q, k, v, heads, causal), p.out);
}

// Per-head attention weights for inspection, [heads][n][n] flattened.
inline std::vector<double> attention_weights(const Tensor& x, const AttentionParams& p,
                                             std::size_t heads, bool causal) {
  NoGradGuard guard;
  const Var xv = Var::constant(x);
  return detail::attention_probs(linear(xv, p.query).value(), linear(xv, p.key).value(), heads,
                                 causal);
}

struct BlockParams {
  LayerNormParams ln_attn;
  AttentionParams attn;
  LayerNormParams ln_mlp;
  LinearParams fc1, fc2;

  static BlockParams create(std::size_t width, std::size_t mlp_width, Rng& rng) {
    BlockParams b;
    b.ln_attn = LayerNormParams::create(width);
    b.attn = AttentionParams::create(width, rng);
    b.ln_mlp = LayerNormParams::create(width);
    b.fc1 = LinearParams::create(mlp_width, width, rng);
    b.fc2 = LinearParams::create(width, mlp_width, rng);
    return b;
  }

  void visit(const std::string& prefix, const ParamVisitor& fn) {
    ln_attn.visit(prefix + ".ln_attn", fn);
    attn.visit(prefix + ".attn", fn);
    ln_mlp.visit(prefix + ".ln_mlp", fn);
    fc1.visit(prefix + ".fc1", fn);
    fc2.visit(prefix + ".fc2", fn);
  }
};

// Pre-norm residual block: h = x + MHA(LN(x)); out = h + MLP(LN(h)).
inline Var transformer_block(const Var& x, const BlockParams& p, std::size_t heads, bool causal) {
  const Var h = add(x, multi_head_attention(layer_norm(x, p.ln_attn), p.attn, heads, causal));
  const Var m = linear(gelu(linear(layer_norm(h, p.ln_mlp), p.fc1)), p.fc2);
  return add(h, m);
}

}  // namespace spluad::nn
