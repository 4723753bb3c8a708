#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "spluad/nn/autograd.hpp"

namespace spluad::nn {

namespace detail {

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), ErrorCode::dimension,
          std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
              shape_string(b.shape()));
}

inline void check_matrix(const Var& x, const char* op) {
  require(x.shape().size() == 2, ErrorCode::dimension,
          std::string(op) + ": expected a matrix, got " + shape_string(x.shape()));
}

inline Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), "add", {a, b}, [](Node& n) {
    for (std::size_t i = 0; i < 2; ++i)
      if (n.parents[i]->requires_grad) n.parents[i]->accumulate(n.grad.data());
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), "sub", {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad.data());
    if (n.parents[1]->requires_grad) {
      auto& g = n.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), "mul", {a, b}, [](Node& n) {
    Node& pa = detail::parent(n, 0);
    Node& pb = detail::parent(n, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa.value[i];
    }
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return make_result(std::move(out), "scale", {a}, [s](Node& n) {
    auto& g = detail::parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
  });
}

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_result(Tensor::scalar(s), "sum", {a}, [](Node& n) {
    auto& g = detail::parent(n, 0).grad_buffer();
    const double d = n.grad[0];
    for (double& v : g.values()) v += d;
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

inline Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_result(std::move(out), "reshape", {a}, [](Node& n) {
    detail::parent(n, 0).accumulate(n.grad.data());
  });
}

// y = x W^T + b, with x [n,in], W [out,in], b [out] (optional).
inline Var linear(const Var& x, const Var& w, const Var& b = Var()) {
  detail::check_matrix(x, "linear");
  detail::check_matrix(w, "linear");
  const std::size_t n = x.shape()[0], in = x.shape()[1], out_dim = w.shape()[0];
  require(w.shape()[1] == in, ErrorCode::dimension,
          "linear: input width " + std::to_string(in) + " does not match weight " +
              shape_string(w.shape()));
  if (b.defined())
    require(b.shape() == Shape{out_dim}, ErrorCode::dimension,
            "linear: bias shape " + shape_string(b.shape()) + " expected [" +
                std::to_string(out_dim) + "]");
  Tensor y({n, out_dim});
  const auto& xv = x.value();
  const auto& wv = w.value();
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = xv.data().data() + i * in;
    double* yr = y.data().data() + i * out_dim;
    for (std::size_t j = 0; j < out_dim; ++j) {
      const double* wr = wv.data().data() + j * in;
      double acc = b.defined() ? b.value()[j] : 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += xr[k] * wr[k];
      yr[j] = acc;
    }
  }
  std::vector<Var> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result(std::move(y), "linear", inputs, [n, in, out_dim](Node& node) {
    Node& px = detail::parent(node, 0);
    Node& pw = detail::parent(node, 1);
    const double* dy = node.grad.data().data();
    if (px.requires_grad) {
      double* dx = px.grad_buffer().data().data();
      const double* wv = pw.value.data().data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out_dim; ++j) {
          const double g = dy[i * out_dim + j];
          if (g == 0.0) continue;
          const double* wr = wv + j * in;
          double* dxr = dx + i * in;
          for (std::size_t k = 0; k < in; ++k) dxr[k] += g * wr[k];
        }
    }
    if (pw.requires_grad) {
      double* dw = pw.grad_buffer().data().data();
      const double* xv = px.value.data().data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out_dim; ++j) {
          const double g = dy[i * out_dim + j];
          if (g == 0.0) continue;
          const double* xr = xv + i * in;
          double* dwr = dw + j * in;
          for (std::size_t k = 0; k < in; ++k) dwr[k] += g * xr[k];
        }
    }
    if (node.parents.size() > 2 && node.parents[2]->requires_grad) {
      auto& db = node.parents[2]->grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out_dim; ++j) db[j] += dy[i * out_dim + j];
    }
  });
}

// Stacks row blocks [n_i, c] into [sum n_i, c]. Undefined entries are skipped.
inline Var concat_rows(const std::vector<Var>& parts) {
  std::vector<Var> inputs;
  std::size_t cols = 0, rows = 0;
  for (const auto& p : parts) {
    if (!p.defined()) continue;
    detail::check_matrix(p, "concat_rows");
    if (inputs.empty()) cols = p.shape()[1];
    require(p.shape()[1] == cols, ErrorCode::dimension, "concat_rows: column mismatch");
    rows += p.shape()[0];
    inputs.push_back(p);
  }
  require(!inputs.empty(), ErrorCode::dimension, "concat_rows: nothing to concatenate");
  if (inputs.size() == 1) return inputs.front();
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& p : inputs) data.insert(data.end(), p.value().values().begin(), p.value().values().end());
  return make_result(Tensor({rows, cols}, std::move(data)), "concat_rows", inputs, [](Node& n) {
    std::size_t offset = 0;
    for (auto& p : n.parents) {
      const std::size_t len = p->value.size();
      if (p->requires_grad) p->accumulate(n.grad.data().subspan(offset, len));
      offset += len;
    }
  });
}

inline Var slice_rows(const Var& x, std::size_t begin, std::size_t count) {
  detail::check_matrix(x, "slice_rows");
  const std::size_t cols = x.shape()[1];
  require(count > 0 && begin + count <= x.shape()[0], ErrorCode::dimension,
          "slice_rows: range out of bounds for " + shape_string(x.shape()));
  const auto src = x.value().data().subspan(begin * cols, count * cols);
  Tensor out({count, cols}, std::vector<double>(src.begin(), src.end()));
  return make_result(std::move(out), "slice_rows", {x}, [begin, cols](Node& n) {
    auto& g = detail::parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[begin * cols + i] += n.grad[i];
  });
}

// Picks rows of `table` by index, e.g. token embedding lookup.
inline Var gather_rows(const Var& table, const std::vector<std::size_t>& ids) {
  detail::check_matrix(table, "gather_rows");
  const std::size_t cols = table.shape()[1];
  require(!ids.empty(), ErrorCode::dimension, "gather_rows: empty index list");
  Tensor out({ids.size(), cols});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] < table.shape()[0], ErrorCode::input,
            "gather_rows: index " + std::to_string(ids[i]) + " out of range");
    std::copy(table.value().row(ids[i]).begin(), table.value().row(ids[i]).end(),
              out.row(i).begin());
  }
  return make_result(std::move(out), "gather_rows", {table}, [ids, cols](Node& n) {
    auto& g = detail::parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t c = 0; c < cols; ++c) g.at(ids[i], c) += n.grad[i * cols + c];
  });
}

// Normalizes over the last axis (population variance), then applies gamma/beta.
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  require(eps > 0.0, ErrorCode::parameter, "layer_norm: eps must be positive");
  const std::size_t d = x.value().cols();
  require(d >= 1 && gamma.shape() == Shape{d} && beta.shape() == Shape{d},
          ErrorCode::dimension, "layer_norm: gamma/beta must have shape [" + std::to_string(d) + "]");
  const std::size_t rows = x.value().rows();
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto xr = x.value().row(r);
    double mu = 0.0;
    for (double v : xr) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : xr) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    auto hr = xhat.row(r);
    auto yr = y.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      hr[c] = (xr[c] - mu) * inv_std[r];
      yr[c] = gamma.value()[c] * hr[c] + beta.value()[c];
    }
  }
  return make_result(std::move(y), "layer_norm", {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std), d, rows](Node& n) {
    Node& px = detail::parent(n, 0);
    Node& pg = detail::parent(n, 1);
    Node& pb = detail::parent(n, 2);
    const auto& dy = n.grad;
    if (pg.requires_grad) {
      auto& g = pg.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c) g[c] += dy[r * d + c] * xhat[r * d + c];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c) g[c] += dy[r * d + c];
    }
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      std::vector<double> dxhat(d);
      for (std::size_t r = 0; r < rows; ++r) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          dxhat[c] = dy[r * d + c] * pg.value[c];
          m1 += dxhat[c];
          m2 += dxhat[c] * xhat[r * d + c];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c)
          g[r * d + c] += inv_std[r] * (dxhat[c] - m1 - xhat[r * d + c] * m2);
      }
    }
  });
}

// tanh approximation of GELU.
inline Var gelu(const Var& x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  Tensor y(x.shape());
  Tensor dydx(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = x.value()[i];
    const double t = std::tanh(k * (v + c * v * v * v));
    y[i] = 0.5 * v * (1.0 + t);
    dydx[i] = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * c * v * v);
  }
  return make_result(std::move(y), "gelu", {x}, [dydx = std::move(dydx)](Node& n) {
    auto& g = detail::parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * dydx[i];
  });
}

// softmax(x / temperature) over a 1-D tensor, max-subtracted.
inline Var softmax(const Var& x, double temperature = 1.0) {
  require(temperature > 0.0, ErrorCode::parameter, "softmax: temperature must be positive");
  require(x.shape().size() == 1, ErrorCode::dimension, "softmax: expected a vector");
  const std::size_t n = x.value().size();
  const double mx = *std::max_element(x.value().values().begin(), x.value().values().end());
  Tensor p({n});
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::exp((x.value()[i] - mx) / temperature);
    z += p[i];
  }
  for (double& v : p.values()) v /= z;
  Tensor saved = p;
  return make_result(std::move(p), "softmax", {x}, [saved = std::move(saved), temperature](Node& n) {
    double dot = 0.0;
    for (std::size_t i = 0; i < saved.size(); ++i) dot += saved[i] * n.grad[i];
    auto& g = detail::parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < saved.size(); ++i)
      g[i] += saved[i] * (n.grad[i] - dot) / temperature;
  });
}

inline Var log_softmax(const Var& x) {
  require(x.shape().size() == 1, ErrorCode::dimension, "log_softmax: expected a vector");
  const std::size_t n = x.value().size();
  const double mx = *std::max_element(x.value().values().begin(), x.value().values().end());
  double z = 0.0;
  for (double v : x.value().values()) z += std::exp(v - mx);
  const double lz = mx + std::log(z);
  Tensor out({n});
  Tensor p({n});
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x.value()[i] - lz;
    p[i] = std::exp(out[i]);
  }
  return make_result(std::move(out), "log_softmax", {x}, [p = std::move(p)](Node& n) {
    double total = 0.0;
    for (double v : n.grad.values()) total += v;
    auto& g = detail::parent(n, 0).grad_buffer();
    for (std::size_t i = 0; i < p.size(); ++i) g[i] += n.grad[i] - p[i] * total;
  });
}

inline Var element(const Var& x, std::size_t i) {
  require(i < x.value().size(), ErrorCode::dimension, "element: index out of range");
  return make_result(Tensor::scalar(x.value()[i]), "element", {x}, [i](Node& n) {
    detail::parent(n, 0).grad_buffer()[i] += n.grad[0];
  });
}

// Packs scalars into a vector [n].
inline Var stack_scalars(const std::vector<Var>& scalars) {
  require(!scalars.empty(), ErrorCode::dimension, "stack_scalars: empty input");
  Tensor out({scalars.size()});
  for (std::size_t i = 0; i < scalars.size(); ++i) out[i] = scalars[i].value().item();
  return make_result(std::move(out), "stack_scalars", scalars, [](Node& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i)
      if (n.parents[i]->requires_grad) n.parents[i]->grad_buffer()[0] += n.grad[i];
  });
}

// sum_i w_i s_i over scalars.
inline Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights) {
  require(scalars.size() == weights.size() && !scalars.empty(), ErrorCode::dimension,
          "weighted_sum: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) total += weights[i] * scalars[i].value().item();
  return make_result(Tensor::scalar(total), "weighted_sum", scalars, [weights](Node& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i)
      if (n.parents[i]->requires_grad) n.parents[i]->grad_buffer()[0] += weights[i] * n.grad[0];
  });
}

// Cosine of the angle between two equal-size tensors (treated as flat vectors).
inline Var cosine_similarity(const Var& a, const Var& b) {
  require(a.value().size() == b.value().size(), ErrorCode::dimension,
          "cosine_similarity: size mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    dot += a.value()[i] * b.value()[i];
    na += a.value()[i] * a.value()[i];
    nb += b.value()[i] * b.value()[i];
  }
  require(na > 0.0 && nb > 0.0, ErrorCode::degenerate_input,
          "cosine_similarity: zero-norm vector");
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  const double c = std::clamp(dot / (na * nb), -1.0, 1.0);
  return make_result(Tensor::scalar(c), "cosine_similarity", {a, b}, [c, na, nb](Node& n) {
    Node& pa = detail::parent(n, 0);
    Node& pb = detail::parent(n, 1);
    const double g = n.grad[0];
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga[i] += g * (pb.value[i] / (na * nb) - c * pa.value[i] / (na * na));
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i)
        gb[i] += g * (pa.value[i] / (na * nb) - c * pb.value[i] / (nb * nb));
    }
  });
}

namespace detail {

// Row-softmax attention weights per head, [heads][n][n] flattened.
inline std::vector<double> attention_probs(const Tensor& q, const Tensor& k, std::size_t heads,
                                           bool causal) {
  const std::size_t n = q.rows(), w = q.cols(), dh = w / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> probs(heads * n * n, 0.0);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      double* pr = probs.data() + (h * n + i) * n;
      const std::size_t last = causal ? i + 1 : n;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < last; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < dh; ++c) acc += q[i * w + h * dh + c] * k[j * w + h * dh + c];
        pr[j] = acc * s;
        mx = std::max(mx, pr[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < last; ++j) {
        pr[j] = std::exp(pr[j] - mx);
        z += pr[j];
      }
      for (std::size_t j = 0; j < last; ++j) pr[j] /= z;
    }
  return probs;
}

}  // namespace detail

// Scaled dot-product attention split across heads. Q, K, V are [n, w] with
// w divisible by heads; causal masks out keys after the query position.
inline Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads, bool causal) {
  detail::check_matrix(q, "attention");
  detail::check_same_shape(q, k, "attention");
  detail::check_same_shape(q, v, "attention");
  const std::size_t n = q.shape()[0], w = q.shape()[1];
  require(heads > 0 && w % heads == 0, ErrorCode::config,
          "attention: width " + std::to_string(w) + " not divisible by " + std::to_string(heads) +
              " heads");
  const std::size_t dh = w / heads;
  auto probs = detail::attention_probs(q.value(), k.value(), heads, causal);
  Tensor out({n, w});
  const auto& vv = v.value();
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      const double* pr = probs.data() + (h * n + i) * n;
      double* orow = out.data().data() + i * w + h * dh;
      for (std::size_t j = 0; j < n; ++j) {
        if (pr[j] == 0.0) continue;
        const double* vr = vv.data().data() + j * w + h * dh;
        for (std::size_t c = 0; c < dh; ++c) orow[c] += pr[j] * vr[c];
      }
    }
  return make_result(std::move(out), "attention", {q, k, v},
                     [probs = std::move(probs), n, w, dh, heads](Node& node) {
    Node& pq = detail::parent(node, 0);
    Node& pk = detail::parent(node, 1);
    Node& pv = detail::parent(node, 2);
    const double s = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto& dout = node.grad;
    const auto& qv = pq.value;
    const auto& kv = pk.value;
    const auto& vv = pv.value;
    double* dq = pq.requires_grad ? pq.grad_buffer().data().data() : nullptr;
    double* dk = pk.requires_grad ? pk.grad_buffer().data().data() : nullptr;
    double* dv = pv.requires_grad ? pv.grad_buffer().data().data() : nullptr;
    std::vector<double> dp(n), ds(n);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < n; ++i) {
        const double* pr = probs.data() + (h * n + i) * n;
        const double* dorow = dout.data().data() + i * w + h * dh;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          if (pr[j] != 0.0) {
            const double* vr = vv.data().data() + j * w + h * dh;
            for (std::size_t c = 0; c < dh; ++c) acc += dorow[c] * vr[c];
            if (dv) {
              double* dvr = dv + j * w + h * dh;
              for (std::size_t c = 0; c < dh; ++c) dvr[c] += pr[j] * dorow[c];
            }
          }
          dp[j] = acc;
          dot += pr[j] * acc;
        }
        for (std::size_t j = 0; j < n; ++j) ds[j] = pr[j] * (dp[j] - dot) * s;
        for (std::size_t j = 0; j < n; ++j) {
          if (ds[j] == 0.0) continue;
          if (dq) {
            const double* kr = kv.data().data() + j * w + h * dh;
            double* dqr = dq + i * w + h * dh;
            for (std::size_t c = 0; c < dh; ++c) dqr[c] += ds[j] * kr[c];
          }
          if (dk) {
            const double* qr = qv.data().data() + i * w + h * dh;
            double* dkr = dk + j * w + h * dh;
            for (std::size_t c = 0; c < dh; ++c) dkr[c] += ds[j] * qr[c];
          }
        }
      }
  });
}

}  // namespace spluad::nn
