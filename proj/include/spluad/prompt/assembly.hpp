#pragma once

#include <memory>
#include <string>
#include <vector>

#include "spluad/clip/encoder.hpp"
#include "spluad/core/checkpoint.hpp"

namespace spluad::prompt {

using nn::Var;

enum class Role { sos, context, prompt, class_token, eos, cls, patch };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::sos: return "sos";
    case Role::context: return "context";
    case Role::prompt: return "prompt";
    case Role::class_token: return "class";
    case Role::eos: return "eos";
    case Role::cls: return "cls";
    case Role::patch: return "patch";
  }
  return "?";
}

// Input rows of one transformer block plus what each row is.
struct AssembledSequence {
  Var embeddings;
  std::vector<Role> roles;

  std::size_t size() const { return roles.size(); }

  std::size_t count(Role r) const {
    std::size_t n = 0;
    for (Role x : roles) n += (x == r);
    return n;
  }
};

enum class Branch { physical = 0, digital = 1 };

inline const char* branch_name(Branch b) { return b == Branch::physical ? "physical" : "digital"; }

inline Branch parse_branch(const std::string& s) {
  if (s == "physical") return Branch::physical;
  if (s == "digital") return Branch::digital;
  fail(ErrorCode::input, "unknown branch id: " + s);
}

// Learnable prompts of one branch: one [M_t, text_width] and one
// [M_v, image_width] block per injected layer. Each branch owns its storage.
struct PromptBundle {
  Branch branch = Branch::physical;
  std::vector<Var> text;    // undefined entries when M_t = 0
  std::vector<Var> visual;  // undefined entries when M_v = 0

  std::size_t depth() const { return text.size(); }
  std::size_t text_count() const { return text.empty() || !text[0].defined() ? 0 : text[0].shape()[0]; }
  std::size_t visual_count() const {
    return visual.empty() || !visual[0].defined() ? 0 : visual[0].shape()[0];
  }

  static PromptBundle create(Branch branch, std::size_t depth, std::size_t text_prompts,
                             std::size_t visual_prompts, std::size_t text_width,
                             std::size_t image_width, double init_std, Rng& rng) {
    PromptBundle b;
    b.branch = branch;
    const std::string prefix = std::string("prompts.") + branch_name(branch);
    for (std::size_t l = 0; l < depth; ++l) {
      b.text.push_back(text_prompts
                           ? Var::parameter(truncated_normal_tensor({text_prompts, text_width}, init_std, rng),
                                            prefix + ".text." + std::to_string(l))
                           : Var());
      b.visual.push_back(visual_prompts ? Var::parameter(truncated_normal_tensor({visual_prompts, image_width},
                                                                                 init_std, rng),
                                                         prefix + ".visual." + std::to_string(l))
                                        : Var());
    }
    return b;
  }

  void visit_trainable(const nn::ParamVisitor& fn) {
    const std::string prefix = std::string("prompts.") + branch_name(branch);
    for (std::size_t l = 0; l < text.size(); ++l)
      if (text[l].defined()) fn(prefix + ".text." + std::to_string(l), text[l]);
    for (std::size_t l = 0; l < visual.size(); ++l)
      if (visual[l].defined()) fn(prefix + ".visual." + std::to_string(l), visual[l]);
  }

  TensorMap to_tensors() const {
    TensorMap out;
    const std::string prefix = std::string("prompts.") + branch_name(branch);
    for (std::size_t l = 0; l < text.size(); ++l)
      if (text[l].defined()) out.emplace(prefix + ".text." + std::to_string(l), text[l].value());
    for (std::size_t l = 0; l < visual.size(); ++l)
      if (visual[l].defined()) out.emplace(prefix + ".visual." + std::to_string(l), visual[l].value());
    return out;
  }
};

// Initial text roles: <sos>, the class/word tokens, <eos>.
inline std::vector<Role> raw_text_roles(std::size_t tokens) {
  std::vector<Role> roles(tokens, Role::class_token);
  roles.front() = Role::sos;
  roles.back() = Role::eos;
  return roles;
}

inline std::vector<Role> raw_image_roles(std::size_t patches) {
  std::vector<Role> roles(patches + 1, Role::patch);
  roles.front() = Role::cls;
  return roles;
}

// Input to text block `layer` (1-based):
//   [sos, q^t_1..q^t_K, p^t_1..p^t_{M_t}, class tokens, eos].
// For layer <= prompt depth the context/prompt rows are rebuilt from the
// bank and this layer's prompts; sos/class/eos rows carry the previous
// block's outputs. Deeper layers pass the previous output through.
inline AssembledSequence assemble_text_layer(std::size_t layer, std::size_t num_layers,
                                             const AssembledSequence& previous, const Var& context,
                                             const PromptBundle& bundle) {
  require(layer >= 1 && layer <= num_layers, ErrorCode::internal,
          "assemble_text_layer: layer " + std::to_string(layer) + " out of range");
  if (layer > bundle.depth()) return previous;
  const std::size_t n = previous.size();
  const std::size_t tail = previous.count(Role::class_token) + previous.count(Role::eos);
  require(previous.count(Role::sos) == 1 && previous.roles.back() == Role::eos, ErrorCode::internal,
          "assemble_text_layer: malformed previous sequence");
  const Var& prompts = bundle.text[layer - 1];
  AssembledSequence out;
  out.embeddings = nn::concat_rows({nn::slice_rows(previous.embeddings, 0, 1), context, prompts,
                                    nn::slice_rows(previous.embeddings, n - tail, tail)});
  out.roles.push_back(Role::sos);
  out.roles.insert(out.roles.end(), context.defined() ? context.shape()[0] : 0, Role::context);
  out.roles.insert(out.roles.end(), prompts.defined() ? prompts.shape()[0] : 0, Role::prompt);
  out.roles.insert(out.roles.end(), previous.roles.end() - static_cast<std::ptrdiff_t>(tail),
                   previous.roles.end());
  return out;
}

// Input to image block `layer`: [cls, patches, q^v_1..q^v_K, p^v_1..p^v_{M_v}],
// cls and patches carried, context and prompts fresh for layer <= depth.
inline AssembledSequence assemble_image_layer(std::size_t layer, std::size_t num_layers,
                                              const AssembledSequence& previous, const Var& context,
                                              const PromptBundle& bundle) {
  require(layer >= 1 && layer <= num_layers, ErrorCode::internal,
          "assemble_image_layer: layer " + std::to_string(layer) + " out of range");
  if (layer > bundle.depth()) return previous;
  const std::size_t carried = previous.count(Role::cls) + previous.count(Role::patch);
  require(previous.count(Role::cls) == 1 && previous.roles.front() == Role::cls, ErrorCode::internal,
          "assemble_image_layer: malformed previous sequence");
  const Var& prompts = bundle.visual[layer - 1];
  AssembledSequence out;
  out.embeddings = nn::concat_rows({nn::slice_rows(previous.embeddings, 0, carried), context, prompts});
  out.roles.assign(previous.roles.begin(), previous.roles.begin() + static_cast<std::ptrdiff_t>(carried));
  out.roles.insert(out.roles.end(), context.defined() ? context.shape()[0] : 0, Role::context);
  out.roles.insert(out.roles.end(), prompts.defined() ? prompts.shape()[0] : 0, Role::prompt);
  return out;
}

// Encoder hooks that drive the assemblers through every block. The hook
// tracks the role layout between calls, so one hook serves one forward pass.
inline clip::LayerHook make_text_hook(const Var& context, const PromptBundle& bundle,
                                      std::size_t num_layers) {
  auto state = std::make_shared<AssembledSequence>();
  return [state, context, &bundle, num_layers](std::size_t layer, const Var& prev) {
    if (layer == 1) state->roles = raw_text_roles(prev.shape()[0]);
    state->embeddings = prev;
    *state = assemble_text_layer(layer, num_layers, *state, context, bundle);
    return state->embeddings;
  };
}

inline clip::LayerHook make_image_hook(const Var& context, const PromptBundle& bundle,
                                       std::size_t num_layers) {
  auto state = std::make_shared<AssembledSequence>();
  return [state, context, &bundle, num_layers](std::size_t layer, const Var& prev) {
    if (layer == 1) state->roles = raw_image_roles(prev.shape()[0] - 1);
    state->embeddings = prev;
    *state = assemble_image_layer(layer, num_layers, *state, context, bundle);
    return state->embeddings;
  };
}

}  // namespace spluad::prompt
