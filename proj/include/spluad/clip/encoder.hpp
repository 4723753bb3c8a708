#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spluad/core/checkpoint.hpp"
#include "spluad/core/rng.hpp"
#include "spluad/clip/class_prompts.hpp"
#include "spluad/clip/tokenizer.hpp"
#include "spluad/nn/layers.hpp"

namespace spluad::clip {

using nn::Var;

// Dual-encoder hyperparameters. The defaults are the toy scale that trains in
// minutes on one core; the reference scale is 224x224x3 input, a 14x14 patch
// grid and 512-d output features.
struct EncoderConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 32;
  std::size_t image_width = 32;
  std::size_t text_width = 32;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t max_text_len = 16;
  double temperature = 0.07;
  double embedding_std = 0.02;
  // Per-channel input normalization (x - mean) / std, CLIP's constants.
  std::array<double, 3> pixel_mean{0.48145466, 0.4578275, 0.40821073};
  std::array<double, 3> pixel_std{0.26862954, 0.26130258, 0.27577711};

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * 3; }

  void validate() const {
    require(patch_size > 0 && image_size % patch_size == 0, ErrorCode::config,
            "image_size must be divisible by patch_size");
    require(embed_dim > 0 && image_width > 0 && text_width > 0 && depth > 0, ErrorCode::config,
            "encoder dimensions must be positive");
    require(heads > 0 && image_width % heads == 0 && text_width % heads == 0, ErrorCode::config,
            "encoder widths must be divisible by heads");
    require(max_text_len >= 3, ErrorCode::config, "max_text_len must be at least 3");
    require(temperature > 0.0, ErrorCode::config, "temperature must be positive");
    for (double sd : pixel_std) require(sd > 0.0, ErrorCode::config, "pixel_std must be positive");
  }
};

// Per-layer sequence rewrite applied before block `layer` (1-based).
using LayerHook = std::function<Var(std::size_t layer, const Var& previous)>;

// Frozen dual-encoder weights. Seeded random initialization stands in for a
// pretrained model; real weights can be loaded through load_tensors().
struct Backbone {
  EncoderConfig config;
  std::size_t vocab_size = 0;

  Var patch_embed;    // [image_width, patch_dim]
  Var class_token;    // [1, image_width]
  Var image_pos;      // [1 + num_patches, image_width]
  nn::LayerNormParams image_ln_pre;
  std::vector<nn::BlockParams> image_blocks;
  nn::LayerNormParams image_ln_post;
  Var image_proj;     // [embed_dim, image_width]

  Var token_embed;    // [vocab_size, text_width]
  Var text_pos;       // [max_text_len, text_width]
  std::vector<nn::BlockParams> text_blocks;
  nn::LayerNormParams text_ln_final;
  Var text_proj;      // [embed_dim, text_width]

  static Backbone create(const EncoderConfig& config, std::size_t vocab_size, std::uint64_t seed) {
    config.validate();
    require(vocab_size > kUnkId, ErrorCode::config, "vocabulary too small");
    Rng rng(seed);
    Backbone b;
    b.config = config;
    b.vocab_size = vocab_size;
    const double es = config.embedding_std;
    const std::size_t iw = config.image_width, tw = config.text_width;
    b.patch_embed = nn::init_weight(iw, config.patch_dim(), rng);
    b.class_token = Var::constant(truncated_normal_tensor({1, iw}, es, rng));
    b.image_pos = Var::constant(truncated_normal_tensor({1 + config.num_patches(), iw}, es, rng));
    b.image_ln_pre = nn::LayerNormParams::create(iw);
    for (std::size_t l = 0; l < config.depth; ++l)
      b.image_blocks.push_back(nn::BlockParams::create(iw, iw * config.mlp_ratio, rng));
    b.image_ln_post = nn::LayerNormParams::create(iw);
    b.image_proj = nn::init_weight(config.embed_dim, iw, rng);

    b.token_embed = Var::constant(truncated_normal_tensor({vocab_size, tw}, es, rng));
    b.text_pos = Var::constant(truncated_normal_tensor({config.max_text_len, tw}, es, rng));
    for (std::size_t l = 0; l < config.depth; ++l)
      b.text_blocks.push_back(nn::BlockParams::create(tw, tw * config.mlp_ratio, rng));
    b.text_ln_final = nn::LayerNormParams::create(tw);
    b.text_proj = nn::init_weight(config.embed_dim, tw, rng);
    return b;
  }

  void visit(const nn::ParamVisitor& fn) {
    fn("backbone.image.patch_embed", patch_embed);
    fn("backbone.image.class_token", class_token);
    fn("backbone.image.pos", image_pos);
    image_ln_pre.visit("backbone.image.ln_pre", fn);
    for (std::size_t l = 0; l < image_blocks.size(); ++l)
      image_blocks[l].visit("backbone.image.block" + std::to_string(l), fn);
    image_ln_post.visit("backbone.image.ln_post", fn);
    fn("backbone.image.proj", image_proj);
    fn("backbone.text.token_embed", token_embed);
    fn("backbone.text.pos", text_pos);
    for (std::size_t l = 0; l < text_blocks.size(); ++l)
      text_blocks[l].visit("backbone.text.block" + std::to_string(l), fn);
    text_ln_final.visit("backbone.text.ln_final", fn);
    fn("backbone.text.proj", text_proj);
  }

  void visit(const std::function<void(const std::string&, const Var&)>& fn) const {
    const_cast<Backbone*>(this)->visit([&](const std::string& n, Var& v) { fn(n, v); });
  }

  bool frozen() const { return !patch_embed.requires_grad(); }

  void set_frozen(bool frozen) {
    visit([frozen](const std::string&, Var& v) { v.set_requires_grad(!frozen); });
  }

  // Bit-level fingerprint of every backbone value.
  std::uint64_t checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    visit([&](const std::string&, const Var& v) { h = fnv1a(v.value().data(), h); });
    return h;
  }

  TensorMap to_tensors() const {
    TensorMap out;
    visit([&](const std::string& n, const Var& v) { out.emplace(n, v.value()); });
    return out;
  }

  // Overwrites values from an archive; shapes must match the configuration.
  void load_tensors(const TensorMap& tensors) {
    visit([&](const std::string& n, Var& v) {
      auto it = tensors.find(n);
      require(it != tensors.end(), ErrorCode::io, "checkpoint is missing " + n);
      require(it->second.shape() == v.shape(), ErrorCode::io,
              "checkpoint shape mismatch for " + n + ": " + shape_string(it->second.shape()) +
                  " vs " + shape_string(v.shape()));
      v.mutable_value() = it->second;
    });
  }
};

// Splits an [H, W, 3] image into raster-ordered flattened patches, each
// channel normalized with the configured mean and std.
inline Tensor extract_patches(const Tensor& image, const EncoderConfig& config) {
  const std::size_t s = config.image_size, p = config.patch_size, g = config.grid();
  require(image.shape() == Shape{s, s, 3}, ErrorCode::input,
          "image shape " + shape_string(image.shape()) + " does not match configured " +
              std::to_string(s) + "x" + std::to_string(s) + "x3");
  Tensor out({g * g, config.patch_dim()});
  for (std::size_t gy = 0; gy < g; ++gy)
    for (std::size_t gx = 0; gx < g; ++gx) {
      double* dst = out.row(gy * g + gx).data();
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t c = 0; c < 3; ++c)
            *dst++ = (image[((gy * p + y) * s + gx * p + x) * 3 + c] - config.pixel_mean[c]) /
                     config.pixel_std[c];
    }
  return out;
}

// Image tower: patch embedding, class token, positions, L bidirectional
// blocks, class-token read-off projected to embed_dim.
inline Var encode_image(const Backbone& bb, const Tensor& image, const LayerHook& hook = {}) {
  const Var patches = Var::constant(extract_patches(image, bb.config));
  Var seq = nn::concat_rows({bb.class_token, nn::linear(patches, bb.patch_embed)});
  seq = nn::layer_norm(nn::add(seq, bb.image_pos), bb.image_ln_pre);
  for (std::size_t l = 0; l < bb.image_blocks.size(); ++l) {
    if (hook) seq = hook(l + 1, seq);
    seq = nn::transformer_block(seq, bb.image_blocks[l], bb.config.heads, /*causal=*/false);
  }
  const Var cls = nn::layer_norm(nn::slice_rows(seq, 0, 1), bb.image_ln_post);
  return nn::reshape(nn::linear(cls, bb.image_proj), {bb.config.embed_dim});
}

inline void validate_tokens(const TokenIds& tokens, const Backbone& bb) {
  require(tokens.size() >= 2 && tokens.front() == kSosId && tokens.back() == kEosId,
          ErrorCode::input, "token sequence must start with <sos> and end with <eos>");
  require(tokens.size() <= bb.config.max_text_len, ErrorCode::input,
          "token sequence longer than max_text_len");
  for (std::size_t id : tokens)
    require(id < bb.vocab_size, ErrorCode::input, "token id out of vocabulary range");
}

// Text tower: token + position embeddings, L causal blocks, read-off at the
// final (<eos>) position. Positions index the original token order, so
// rows injected by a hook carry no positional embedding.
inline Var encode_text(const Backbone& bb, const TokenIds& tokens, const LayerHook& hook = {}) {
  validate_tokens(tokens, bb);
  Var seq = nn::add(nn::gather_rows(bb.token_embed, tokens),
                    nn::slice_rows(bb.text_pos, 0, tokens.size()));
  for (std::size_t l = 0; l < bb.text_blocks.size(); ++l) {
    if (hook) seq = hook(l + 1, seq);
    seq = nn::transformer_block(seq, bb.text_blocks[l], bb.config.heads, /*causal=*/true);
  }
  const std::size_t last = seq.shape()[0] - 1;
  const Var eos = nn::layer_norm(nn::slice_rows(seq, last, 1), bb.text_ln_final);
  return nn::reshape(nn::linear(eos, bb.text_proj), {bb.config.embed_dim});
}

// Scaled similarities cos(v, l_c) / temperature, [C].
inline Var class_logits(const Var& visual, const std::vector<Var>& class_features, double temperature) {
  require(class_features.size() >= 2, ErrorCode::input, "need at least two class features");
  require(temperature > 0.0, ErrorCode::parameter, "temperature must be positive");
  std::vector<Var> sims;
  sims.reserve(class_features.size());
  for (const auto& l : class_features) sims.push_back(nn::cosine_similarity(visual, l));
  return nn::scale(nn::stack_scalars(sims), 1.0 / temperature);
}

// p(y = c | v) = softmax_c(cos(v, l_c) / temperature).
inline Var class_probabilities(const Var& visual, const std::vector<Var>& class_features,
                               double temperature) {
  return nn::softmax(class_logits(visual, class_features, temperature));
}

inline Var class_probabilities(const Var& visual, const Tensor& class_features, double temperature) {
  std::vector<Var> rows;
  for (std::size_t c = 0; c < class_features.rows(); ++c) {
    const auto r = class_features.row(c);
    rows.push_back(Var::constant(Tensor({r.size()}, std::vector<double>(r.begin(), r.end()))));
  }
  return class_probabilities(visual, rows, temperature);
}

inline Tensor stack_rows(const std::vector<Tensor>& rows) {
  require(!rows.empty(), ErrorCode::dimension, "stack_rows: empty input");
  const std::size_t d = rows.front().size();
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == d, ErrorCode::dimension, "stack_rows: width mismatch");
    std::copy(rows[i].values().begin(), rows[i].values().end(), out.row(i).begin());
  }
  return out;
}

// Zero-shot text features of each class's filled template, [C, embed_dim].
inline Tensor class_embeddings(const Backbone& bb, const Vocabulary& vocab,
                               const ClassPromptSet& prompts) {
  prompts.validate();
  nn::NoGradGuard guard;
  std::vector<Tensor> rows;
  for (const auto& c : prompts.classes)
    rows.push_back(encode_text(bb, tokenize(prompts.fill(c.name), vocab, bb.config.max_text_len)).value());
  return stack_rows(rows);
}

struct DescriptionEmbeddings {
  Tensor embeddings;                  // [total descriptions, embed_dim]
  std::vector<std::size_t> class_of;  // class index per row
  std::vector<std::string> texts;     // filled template per row
};

// Every description of every class through the template; the rows that
// context clustering runs over.
inline DescriptionEmbeddings description_embeddings(const Backbone& bb, const Vocabulary& vocab,
                                                    const ClassPromptSet& prompts) {
  prompts.validate();
  nn::NoGradGuard guard;
  DescriptionEmbeddings out;
  std::vector<Tensor> rows;
  for (std::size_t c = 0; c < prompts.classes.size(); ++c)
    for (const auto& d : prompts.classes[c].descriptions) {
      const std::string text = prompts.fill(d);
      rows.push_back(encode_text(bb, tokenize(text, vocab, bb.config.max_text_len)).value());
      out.class_of.push_back(c);
      out.texts.push_back(text);
    }
  out.embeddings = stack_rows(rows);
  return out;
}

}  // namespace spluad::clip
