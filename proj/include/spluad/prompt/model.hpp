#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "spluad/prompt/assembly.hpp"
#include "spluad/prompt/context.hpp"

namespace spluad::prompt {

struct PromptConfig {
  std::size_t context_size = 4;    // K
  std::size_t text_prompts = 4;    // M_t
  std::size_t visual_prompts = 4;  // M_v
  std::size_t depth = 0;           // D; 0 means every block
  double init_std = 0.02;

  std::size_t resolved_depth(std::size_t layers) const { return depth == 0 ? layers : depth; }

  void validate(std::size_t layers) const {
    require(depth <= layers, ErrorCode::config,
            "prompt depth " + std::to_string(depth) + " exceeds encoder depth " +
                std::to_string(layers));
    require(init_std >= 0.0, ErrorCode::config, "prompt init_std must be non-negative");
  }
};

// Class keys of the unified prompt set, in branch order.
inline constexpr const char* kLiveKey = "live";
inline constexpr const char* kPhysicalKey = "physical_attack";
inline constexpr const char* kDigitalKey = "digital_attack";

// Per-step shared state: context tokens and each branch's prompted class
// features, computed once and reused for every image in a batch.
struct StepContext {
  Var text_context;
  Var image_context;
  std::array<std::vector<Var>, 2> class_features;  // [branch] -> {live, attack}
};

struct BranchOutput {
  Var logits;                       // [2]: cos / temperature
  Var probabilities;                // [2]: {live, attack}
  Var visual;                       // prompted image feature [d]
  std::vector<Var> class_features;  // prompted text features {live, attack}

  double live_probability() const { return probabilities.value()[0]; }
};

// Frozen backbone + shared context bank + two disjoint prompt bundles.
class SpoofPromptModel {
 public:
  SpoofPromptModel(std::shared_ptr<const clip::Backbone> backbone, clip::Vocabulary vocab,
                   clip::ClassPromptSet prompts, PromptConfig config, std::uint64_t seed)
      : backbone_(std::move(backbone)),
        vocab_(std::move(vocab)),
        prompts_(std::move(prompts)),
        config_(config) {
    const auto& ec = backbone_->config;
    config_.validate(ec.depth);
    prompts_.validate();
    class_index_ = {prompts_.index_of(kLiveKey), prompts_.index_of(kPhysicalKey),
                    prompts_.index_of(kDigitalKey)};
    for (const auto& c : prompts_.classes)
      class_tokens_.push_back(clip::tokenize(prompts_.fill(c.name), vocab_, ec.max_text_len));
    clip_class_features_ = clip::class_embeddings(*backbone_, vocab_, prompts_);

    if (config_.context_size > 0) {
      descriptions_ = clip::description_embeddings(*backbone_, vocab_, prompts_);
      bank_ = build_context(descriptions_.embeddings, config_.context_size, ec.text_width,
                            ec.image_width, seed);
    }
    Rng rng(seed ^ 0x2545f4914f6cdd1dULL);
    const std::size_t depth = config_.resolved_depth(ec.depth);
    for (Branch b : {Branch::physical, Branch::digital})
      bundles_[static_cast<std::size_t>(b)] =
          PromptBundle::create(b, depth, config_.text_prompts, config_.visual_prompts, ec.text_width,
                               ec.image_width, config_.init_std, rng);
  }

  const clip::Backbone& backbone() const { return *backbone_; }
  const clip::Vocabulary& vocabulary() const { return vocab_; }
  const clip::ClassPromptSet& class_prompts() const { return prompts_; }
  const PromptConfig& config() const { return config_; }
  const ContextBank& bank() const { return bank_; }
  ContextBank& bank() { return bank_; }
  PromptBundle& bundle(Branch b) { return bundles_[static_cast<std::size_t>(b)]; }
  const PromptBundle& bundle(Branch b) const { return bundles_[static_cast<std::size_t>(b)]; }
  const clip::DescriptionEmbeddings& descriptions() const { return descriptions_; }

  // Row indices into the class prompt set: {live, physical, digital}.
  std::size_t class_index(std::size_t which) const { return class_index_[which]; }
  std::size_t attack_class(Branch b) const { return class_index_[1 + static_cast<std::size_t>(b)]; }

  // Zero-shot (unprompted) text features of every class, [C, d].
  const Tensor& clip_class_features() const { return clip_class_features_; }

  Var prompted_text_feature(std::size_t class_row, Branch b, const Var& text_context) const {
    const auto& ec = backbone_->config;
    return clip::encode_text(*backbone_, class_tokens_[class_row],
                             make_text_hook(text_context, bundle(b), ec.depth));
  }

  Var prompted_image_feature(const Tensor& image, Branch b, const Var& image_context) const {
    return clip::encode_image(*backbone_, image,
                              make_image_hook(image_context, bundle(b), backbone_->config.depth));
  }

  StepContext prepare() const {
    StepContext ctx;
    ctx.text_context = bank_.text_context();
    ctx.image_context = bank_.image_context();
    for (Branch b : {Branch::physical, Branch::digital}) {
      auto& feats = ctx.class_features[static_cast<std::size_t>(b)];
      feats.push_back(prompted_text_feature(class_index_[0], b, ctx.text_context));
      feats.push_back(prompted_text_feature(attack_class(b), b, ctx.text_context));
    }
    return ctx;
  }

  // Both encoders with the branch's bundle and the shared bank; returns the
  // two-way probabilities over {live, branch attack}.
  BranchOutput branch_forward(const Tensor& image, Branch b, const StepContext& ctx) const {
    BranchOutput out;
    out.visual = prompted_image_feature(image, b, ctx.image_context);
    out.class_features = ctx.class_features[static_cast<std::size_t>(b)];
    out.logits = clip::class_logits(out.visual, out.class_features, backbone_->config.temperature);
    out.probabilities = nn::softmax(out.logits);
    return out;
  }

  BranchOutput branch_forward(const Tensor& image, Branch b) const {
    return branch_forward(image, b, prepare());
  }

  Tensor clip_image_feature(const Tensor& image) const {
    nn::NoGradGuard guard;
    return clip::encode_image(*backbone_, image).value();
  }

  // Live probability from each branch, without recording a tape.
  std::array<double, 2> branch_live_probabilities(const Tensor& image, const StepContext& ctx) const {
    nn::NoGradGuard guard;
    return {branch_forward(image, Branch::physical, ctx).live_probability(),
            branch_forward(image, Branch::digital, ctx).live_probability()};
  }

  void visit_trainable(const nn::ParamVisitor& fn) {
    bank_.visit_trainable(fn);
    for (auto& b : bundles_) b.visit_trainable(fn);
  }

  std::vector<Var> trainable_parameters() {
    std::vector<Var> out;
    visit_trainable([&](const std::string&, Var& v) { out.push_back(v); });
    return out;
  }

  // Everything except the backbone: context bank and both bundles.
  TensorMap to_tensors() const {
    TensorMap out = bank_.to_tensors();
    for (const auto& b : bundles_) out.merge(b.to_tensors());
    return out;
  }

  void load_tensors(const TensorMap& tensors) {
    if (bank_.size() > 0) {
      ContextBank loaded = ContextBank::from_tensors(tensors);
      require(loaded.size() == bank_.size(), ErrorCode::io, "checkpoint context size mismatch");
      bank_.centers = loaded.centers;
      bank_.w_text.mutable_value() = loaded.w_text.value();
      bank_.w_image.mutable_value() = loaded.w_image.value();
    }
    for (auto& b : bundles_)
      b.visit_trainable([&](const std::string& n, Var& v) {
        auto it = tensors.find(n);
        require(it != tensors.end(), ErrorCode::io, "checkpoint is missing " + n);
        require(it->second.shape() == v.shape(), ErrorCode::io, "checkpoint shape mismatch for " + n);
        v.mutable_value() = it->second;
      });
  }

 private:
  std::shared_ptr<const clip::Backbone> backbone_;
  clip::Vocabulary vocab_;
  clip::ClassPromptSet prompts_;
  PromptConfig config_;
  std::array<std::size_t, 3> class_index_{};
  std::vector<clip::TokenIds> class_tokens_;
  Tensor clip_class_features_;
  clip::DescriptionEmbeddings descriptions_;
  ContextBank bank_;
  std::array<PromptBundle, 2> bundles_;
};

// Unified live score: a sample must look live to both branches.
inline double fuse_branches(double p_physical, double p_digital) {
  require(p_physical >= 0.0 && p_physical <= 1.0 && p_digital >= 0.0 && p_digital <= 1.0,
          ErrorCode::input, "fuse_branches: probabilities must lie in [0, 1]");
  return std::min(p_physical, p_digital);
}

}  // namespace spluad::prompt
