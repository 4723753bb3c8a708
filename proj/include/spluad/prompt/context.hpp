#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "spluad/clip/encoder.hpp"
#include "spluad/prompt/kmeans.hpp"

namespace spluad::prompt {

using nn::Var;

// Spoof-aware context: K cluster centers over class description embeddings
// and the two trainable projections into each encoder's hidden width.
// Projected tokens are always recomputed from the current weights.
struct ContextBank {
  Tensor centers;  // [K, d]; empty when K = 0
  Var w_text;      // [text_width, d]
  Var w_image;     // [image_width, d]
  KMeansResult clustering;

  std::size_t size() const { return centers.empty() ? 0 : centers.rows(); }

  // q^t_i = W_t q_i for every center, [K, text_width]; undefined when K = 0.
  Var text_context() const {
    if (size() == 0) return {};
    return nn::linear(Var::constant(centers), w_text);
  }

  // q^v_i = W_v q_i, [K, image_width]; undefined when K = 0.
  Var image_context() const {
    if (size() == 0) return {};
    return nn::linear(Var::constant(centers), w_image);
  }

  void visit_trainable(const nn::ParamVisitor& fn) {
    if (size() == 0) return;
    fn("context.w_text", w_text);
    fn("context.w_image", w_image);
  }

  TensorMap to_tensors() const {
    TensorMap out;
    if (size() == 0) return out;
    out.emplace("context.centers", centers);
    out.emplace("context.w_text", w_text.value());
    out.emplace("context.w_image", w_image.value());
    return out;
  }

  static ContextBank from_tensors(const TensorMap& tensors) {
    ContextBank bank;
    auto it = tensors.find("context.centers");
    if (it == tensors.end()) return bank;
    bank.centers = it->second;
    for (const char* key : {"context.w_text", "context.w_image"})
      require(tensors.count(key), ErrorCode::io, std::string("checkpoint is missing ") + key);
    bank.w_text = Var::parameter(tensors.at("context.w_text"), "context.w_text");
    bank.w_image = Var::parameter(tensors.at("context.w_image"), "context.w_image");
    return bank;
  }
};

// Clusters the description embeddings and initializes W_t, W_v with
// std 1/sqrt(d). K = 0 yields an empty bank.
inline ContextBank build_context(const Tensor& class_embeds, std::size_t k, std::size_t text_width,
                                 std::size_t image_width, std::uint64_t seed) {
  ContextBank bank;
  if (k == 0) return bank;
  require(class_embeds.rank() == 2, ErrorCode::dimension, "build_context: embeddings must be [n, d]");
  bank.clustering = kmeans(class_embeds, k, seed);
  bank.centers = bank.clustering.centers;
  const std::size_t d = class_embeds.cols();
  Rng rng(seed ^ 0x5bd1e995ULL);
  const double init_std = 1.0 / std::sqrt(static_cast<double>(d));
  bank.w_text = Var::parameter(truncated_normal_tensor({text_width, d}, init_std, rng), "context.w_text");
  bank.w_image = Var::parameter(truncated_normal_tensor({image_width, d}, init_std, rng), "context.w_image");
  return bank;
}

// Human-readable clustering summary: cluster sizes and inertia of the
// description rows against the stored centers, plus the nearest description
// per center. Works equally for a fresh bank and one loaded from disk.
inline std::string context_report(const ContextBank& bank, const clip::DescriptionEmbeddings& rows) {
  std::ostringstream os;
  os << "clusters: " << bank.size() << '\n';
  if (bank.size() == 0) return os.str();
  const std::size_t k = bank.size();
  std::vector<std::size_t> sizes(k, 0);
  double inertia = 0.0;
  for (std::size_t i = 0; i < rows.embeddings.rows(); ++i) {
    std::size_t best_c = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double d = kmeans_detail::sq_dist(rows.embeddings.row(i), bank.centers.row(c));
      if (d < best) {
        best = d;
        best_c = c;
      }
    }
    ++sizes[best_c];
    inertia += best;
  }
  os << std::setprecision(6) << std::fixed;
  os << "rows: " << rows.embeddings.rows() << '\n';
  os << "inertia: " << inertia << '\n';
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rows.embeddings.rows(); ++i) {
      const double d = kmeans_detail::sq_dist(rows.embeddings.row(i), bank.centers.row(c));
      if (d < best) {
        best = d;
        nearest = i;
      }
    }
    os << "center " << c << ": size " << sizes[c] << ", nearest \"" << rows.texts[nearest]
       << "\" (distance " << std::sqrt(best) << ")\n";
  }
  return os.str();
}

}  // namespace spluad::prompt
