#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "spluad/data/synth.hpp"
#include "spluad/metrics/report.hpp"
#include "spluad/train/trainer.hpp"

namespace spluad::train {

using nlohmann::json;

// Everything needed to rebuild a run: encoder shape, backbone seed, prompt
// sizes, training hyperparameters and where the data comes from. With no
// manifest the synthetic corpus is generated in memory.
struct ExperimentConfig {
  clip::EncoderConfig encoder;
  std::uint64_t backbone_seed = 2024;
  prompt::PromptConfig prompt;
  TrainConfig train;
  data::SynthConfig synth;
  std::string manifest;  // CSV manifest; empty selects the synthetic corpus
  double train_fraction = 0.8;
  std::uint64_t split_seed = 11;
  std::string class_prompts;  // JSON file; empty selects the built-in set

  void validate() const {
    encoder.validate();
    prompt.validate(encoder.depth);
    train.validate();
    synth.validate();
    require(train_fraction > 0.0 && train_fraction < 1.0, ErrorCode::config,
            "train_fraction must lie in (0, 1)");
    require(synth.image_size == encoder.image_size || !manifest.empty(), ErrorCode::config,
            "synth.image_size must equal encoder.image_size");
  }

  // The prompt configuration actually built: SCPG off means no context.
  prompt::PromptConfig effective_prompt() const {
    prompt::PromptConfig p = prompt;
    if (!train.scpg_on) p.context_size = 0;
    return p;
  }
};

namespace experiment_detail {

inline void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> keys) {
  require(j.is_object(), ErrorCode::config, "config section '" + section + "' must be an object");
  std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    require(known.count(k) > 0, ErrorCode::config,
            "unknown config key '" + (section.empty() ? k : section + "." + k) + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::config, "config key '" + section + "." + key + "' has the wrong type");
  }
}

}  // namespace experiment_detail

inline json to_json(const ExperimentConfig& c) {
  const auto& e = c.encoder;
  const auto& p = c.prompt;
  const auto& t = c.train;
  const auto& s = c.synth;
  return json{
      {"encoder",
       {{"image_size", e.image_size},
        {"patch_size", e.patch_size},
        {"embed_dim", e.embed_dim},
        {"image_width", e.image_width},
        {"text_width", e.text_width},
        {"depth", e.depth},
        {"heads", e.heads},
        {"mlp_ratio", e.mlp_ratio},
        {"max_text_len", e.max_text_len},
        {"temperature", e.temperature},
        {"embedding_std", e.embedding_std},
        {"pixel_mean", e.pixel_mean},
        {"pixel_std", e.pixel_std}}},
      {"backbone_seed", c.backbone_seed},
      {"prompt",
       {{"context_size", p.context_size},
        {"text_prompts", p.text_prompts},
        {"visual_prompts", p.visual_prompts},
        {"depth", p.depth},
        {"init_std", p.init_std}}},
      {"train",
       {{"learning_rate", t.learning_rate},
        {"batch_size", t.batch_size},
        {"steps", t.steps},
        {"lambda_cons", t.lambda_cons},
        {"rho", t.rho},
        {"w_hard", t.w_hard},
        {"seed", t.seed},
        {"scpg", t.scpg_on},
        {"caa", t.caa_on},
        {"eval_every", t.eval_every}}},
      {"data",
       {{"manifest", c.manifest},
        {"train_fraction", c.train_fraction},
        {"split_seed", c.split_seed},
        {"synth",
         {{"live", s.live},
          {"physical", s.physical},
          {"digital", s.digital},
          {"image_size", s.image_size},
          {"alpha", s.alpha},
          {"seed", s.seed}}}}},
      {"class_prompts", c.class_prompts}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig experiment_from_json(const json& j) {
  using experiment_detail::check_keys;
  using experiment_detail::read;
  ExperimentConfig c;
  check_keys(j, "", {"encoder", "backbone_seed", "prompt", "train", "data", "class_prompts"});
  read(j, "backbone_seed", c.backbone_seed, "");
  read(j, "class_prompts", c.class_prompts, "");
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    check_keys(e, "encoder",
               {"image_size", "patch_size", "embed_dim", "image_width", "text_width", "depth", "heads",
                "mlp_ratio", "max_text_len", "temperature", "embedding_std", "pixel_mean", "pixel_std"});
    auto& o = c.encoder;
    read(e, "image_size", o.image_size, "encoder");
    read(e, "patch_size", o.patch_size, "encoder");
    read(e, "embed_dim", o.embed_dim, "encoder");
    read(e, "image_width", o.image_width, "encoder");
    read(e, "text_width", o.text_width, "encoder");
    read(e, "depth", o.depth, "encoder");
    read(e, "heads", o.heads, "encoder");
    read(e, "mlp_ratio", o.mlp_ratio, "encoder");
    read(e, "max_text_len", o.max_text_len, "encoder");
    read(e, "temperature", o.temperature, "encoder");
    read(e, "embedding_std", o.embedding_std, "encoder");
    read(e, "pixel_mean", o.pixel_mean, "encoder");
    read(e, "pixel_std", o.pixel_std, "encoder");
  }
  if (j.contains("prompt")) {
    const auto& p = j.at("prompt");
    check_keys(p, "prompt", {"context_size", "text_prompts", "visual_prompts", "depth", "init_std"});
    read(p, "context_size", c.prompt.context_size, "prompt");
    read(p, "text_prompts", c.prompt.text_prompts, "prompt");
    read(p, "visual_prompts", c.prompt.visual_prompts, "prompt");
    read(p, "depth", c.prompt.depth, "prompt");
    read(p, "init_std", c.prompt.init_std, "prompt");
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t, "train",
               {"learning_rate", "batch_size", "steps", "lambda_cons", "rho", "w_hard", "seed", "scpg", "caa",
                "eval_every"});
    auto& o = c.train;
    read(t, "learning_rate", o.learning_rate, "train");
    read(t, "batch_size", o.batch_size, "train");
    read(t, "steps", o.steps, "train");
    read(t, "lambda_cons", o.lambda_cons, "train");
    read(t, "rho", o.rho, "train");
    read(t, "w_hard", o.w_hard, "train");
    read(t, "seed", o.seed, "train");
    read(t, "scpg", o.scpg_on, "train");
    read(t, "caa", o.caa_on, "train");
    read(t, "eval_every", o.eval_every, "train");
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, "data", {"manifest", "train_fraction", "split_seed", "synth"});
    read(d, "manifest", c.manifest, "data");
    read(d, "train_fraction", c.train_fraction, "data");
    read(d, "split_seed", c.split_seed, "data");
    if (d.contains("synth")) {
      const auto& s = d.at("synth");
      check_keys(s, "data.synth", {"live", "physical", "digital", "image_size", "alpha", "seed"});
      read(s, "live", c.synth.live, "data.synth");
      read(s, "physical", c.synth.physical, "data.synth");
      read(s, "digital", c.synth.digital, "data.synth");
      read(s, "image_size", c.synth.image_size, "data.synth");
      read(s, "alpha", c.synth.alpha, "data.synth");
      read(s, "seed", c.synth.seed, "data.synth");
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::io, "cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::config, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_from_json(j);
}

inline void save_experiment_config(const ExperimentConfig& c, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::io, "cannot write config: " + path.string());
  os << to_json(c).dump(2) << '\n';
}

// Backbone (frozen), vocabulary and prompt model for a config. The backbone
// seed is independent of the run seed so every run shares one "pretrained"
// encoder.
struct ExperimentModel {
  std::shared_ptr<clip::Backbone> backbone;
  std::unique_ptr<prompt::SpoofPromptModel> model;
};

inline clip::ClassPromptSet class_prompts_for(const ExperimentConfig& c) {
  return c.class_prompts.empty() ? clip::default_class_prompts() : clip::load_class_prompts(c.class_prompts);
}

// Whole tensor state of a model: the frozen backbone ("backbone.*") plus the
// context bank and prompts.
inline TensorMap model_tensors(const ExperimentModel& m) {
  TensorMap out = m.model->to_tensors();
  out.merge(m.backbone->to_tensors());
  return out;
}

// With a checkpoint, backbone weights are loaded before the prompt model is
// built (its zero-shot class features depend on them), then the trainable
// state is overwritten.
inline ExperimentModel build_model(const ExperimentConfig& c, const TensorMap* checkpoint = nullptr) {
  auto prompts = class_prompts_for(c);
  auto vocab = clip::Vocabulary::from_texts(prompts.all_texts());
  ExperimentModel m;
  m.backbone = std::make_shared<clip::Backbone>(clip::Backbone::create(c.encoder, vocab.size(), c.backbone_seed));
  TensorMap rest;
  if (checkpoint) {
    TensorMap backbone;
    for (const auto& [name, t] : *checkpoint) {
      if (name.rfind("backbone.", 0) == 0)
        backbone.emplace(name, t);
      else
        rest.emplace(name, t);
    }
    if (!backbone.empty()) m.backbone->load_tensors(backbone);
  }
  m.backbone->set_frozen(true);
  m.model = std::make_unique<prompt::SpoofPromptModel>(m.backbone, std::move(vocab), std::move(prompts),
                                                       c.effective_prompt(), c.train.seed);
  if (checkpoint) m.model->load_tensors(rest);
  return m;
}

inline data::Dataset load_dataset(const ExperimentConfig& c) {
  if (c.manifest.empty()) return data::generate(c.synth);
  return data::load_manifest(c.manifest, c.encoder.image_size);
}

inline data::SplitResult load_split(const ExperimentConfig& c) {
  return data::split(load_dataset(c), c.train_fraction, c.split_seed);
}

struct ExperimentResult {
  ExperimentModel model;
  TrainingResult training;
};

inline ExperimentResult run_experiment(const ExperimentConfig& c, const data::SplitResult& split,
                                       std::ostream* log = nullptr) {
  c.validate();
  ExperimentResult r{build_model(c), {}};
  r.training = run_training(*r.model.model, c.train, split.train, split.eval, log);
  return r;
}

// Ablation grid: for each seed the four (SCPG, CAA) cells in table order.
inline std::vector<metrics::AblationCell> ablation_grid(const std::vector<std::uint64_t>& seeds) {
  std::vector<metrics::AblationCell> cells;
  for (auto seed : seeds)
    for (auto [scpg, caa] : {std::pair{false, false}, {true, false}, {false, true}, {true, true}})
      cells.push_back({scpg, caa, seed, {}});
  return cells;
}

// Trains one cell on a shared split; only the run seed and the two flags
// differ from `base`.
inline void run_ablation_cell(const ExperimentConfig& base, const data::SplitResult& split,
                              metrics::AblationCell& cell) {
  ExperimentConfig c = base;
  c.train.seed = cell.seed;
  c.train.scpg_on = cell.scpg;
  c.train.caa_on = cell.caa;
  cell.summary = *run_experiment(c, split).training.summary;
}

}  // namespace spluad::train
