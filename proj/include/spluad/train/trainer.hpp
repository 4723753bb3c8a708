#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "spluad/data/dataset.hpp"
#include "spluad/metrics/metrics.hpp"
#include "spluad/prompt/model.hpp"
#include "spluad/train/adam.hpp"
#include "spluad/train/caa.hpp"
#include "spluad/train/losses.hpp"

namespace spluad::train {

using prompt::Branch;
using prompt::SpoofPromptModel;

// The reference learning rate is tuned for a pretrained backbone; on a
// random frozen toy backbone it barely moves, hence the toy default.
inline constexpr double kReferenceLearningRate = 1e-6;

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t steps = 300;
  double lambda_cons = 1.0;
  double rho = 0.3;
  double w_hard = 2.0;
  std::uint64_t seed = 7;
  bool scpg_on = true;
  bool caa_on = true;
  std::size_t eval_every = 0;  // 0: evaluate after the last step only

  void validate() const {
    require(learning_rate >= 0.0, ErrorCode::config, "learning rate must be non-negative");
    require(batch_size > 0, ErrorCode::config, "batch size must be positive");
    require(lambda_cons >= 0.0, ErrorCode::config, "lambda_cons must be non-negative");
    require(rho >= 0.0 && rho < 1.0, ErrorCode::config, "CAA rho must lie in [0, 1)");
    require(w_hard >= 1.0, ErrorCode::config, "CAA w_hard must be at least 1");
  }
};

struct LossBreakdown {
  double ce_physical = 0.0;
  double ce_digital = 0.0;
  double consistency_text = 0.0;
  double consistency_visual = 0.0;
  double total = 0.0;
  bool physical_empty = false;
  bool digital_empty = false;
  std::size_t hard_samples = 0;
};

// One training example after CAA: the (possibly augmented) image, its label
// and its loss weight.
struct BatchItem {
  Tensor image;
  data::Label label = data::Label::live;
  double weight = 1.0;
};

// The differentiable pieces of one step's objective.
struct LossGraph {
  Var ce_physical;
  Var ce_digital;
  Var consistency_text;
  Var consistency_visual;
  Var total;
  bool physical_empty = false;
  bool digital_empty = false;

  LossBreakdown breakdown() const {
    LossBreakdown b;
    b.ce_physical = ce_physical.value().item();
    b.ce_digital = ce_digital.value().item();
    b.consistency_text = consistency_text.value().item();
    b.consistency_visual = consistency_visual.value().item();
    b.total = total.value().item();
    b.physical_empty = physical_empty;
    b.digital_empty = digital_empty;
    return b;
  }
};

inline bool legal_for(data::Label label, Branch b) {
  if (label == data::Label::live) return true;
  return b == Branch::physical ? label == data::Label::physical_attack
                               : label == data::Label::digital_attack;
}

// Live samples feed both branch CE terms, each attack only its own branch.
// total = ce_phys + ce_dig + lambda * (text + visual consistency).
inline LossGraph build_loss(const SpoofPromptModel& model, const std::vector<BatchItem>& batch,
                            double lambda_cons) {
  require(!batch.empty(), ErrorCode::input, "build_loss: empty batch");
  const auto ctx = model.prepare();

  std::vector<Var> logits[2];
  std::vector<std::size_t> targets[2];
  std::vector<double> weights[2];
  std::vector<Var> prompted_visual, clip_visual;
  for (const auto& item : batch) {
    const Var clip_v = Var::constant(model.clip_image_feature(item.image));
    for (Branch b : {Branch::physical, Branch::digital}) {
      if (!legal_for(item.label, b)) continue;
      const auto out = model.branch_forward(item.image, b, ctx);
      const auto k = static_cast<std::size_t>(b);
      logits[k].push_back(out.logits);
      targets[k].push_back(item.label == data::Label::live ? 0 : 1);
      weights[k].push_back(item.weight);
      prompted_visual.push_back(out.visual);
      clip_visual.push_back(clip_v);
    }
  }

  std::vector<Var> prompted_class, clip_class;
  const Tensor& zero_shot = model.clip_class_features();
  for (Branch b : {Branch::physical, Branch::digital}) {
    const auto& feats = ctx.class_features[static_cast<std::size_t>(b)];
    const std::size_t rows[2] = {model.class_index(0), model.attack_class(b)};
    for (std::size_t j = 0; j < 2; ++j) {
      prompted_class.push_back(feats[j]);
      const auto r = zero_shot.row(rows[j]);
      clip_class.push_back(Var::constant(Tensor({r.size()}, std::vector<double>(r.begin(), r.end()))));
    }
  }

  LossGraph g;
  const auto ce_p = weighted_ce(logits[0], targets[0], weights[0]);
  const auto ce_d = weighted_ce(logits[1], targets[1], weights[1]);
  g.ce_physical = ce_p.loss;
  g.ce_digital = ce_d.loss;
  g.physical_empty = ce_p.empty;
  g.digital_empty = ce_d.empty;
  std::tie(g.consistency_text, g.consistency_visual) =
      consistency_loss(prompted_class, clip_class, prompted_visual, clip_visual);
  g.total = nn::add(nn::add(g.ce_physical, g.ce_digital),
                    nn::scale(nn::add(g.consistency_text, g.consistency_visual), lambda_cons));
  return g;
}

// Live probability per branch and the fused score for every sample.
inline std::vector<metrics::ScoreRecord> evaluate(const SpoofPromptModel& model, const data::Dataset& ds) {
  nn::NoGradGuard guard;
  const auto ctx = model.prepare();
  std::vector<metrics::ScoreRecord> out;
  out.reserve(ds.size());
  for (const auto& s : ds) {
    const auto p = model.branch_live_probabilities(s.image, ctx);
    metrics::ScoreRecord r;
    r.id = s.id;
    r.bona_fide = s.bona_fide();
    r.label = data::label_name(s.label);
    r.family = s.family;
    r.score_physical = p[0];
    r.score_digital = p[1];
    r.score = prompt::fuse_branches(p[0], p[1]);
    out.push_back(std::move(r));
  }
  return out;
}

class Trainer {
 public:
  Trainer(SpoofPromptModel& model, TrainConfig config)
      : model_(model),
        config_(config),
        adam_(model.trainable_parameters(), AdamOptions{config.learning_rate}),
        aug_rng_(config.seed ^ 0xa0761d6478bd642fULL) {
    config_.validate();
    require(model.backbone().frozen(), ErrorCode::config, "the backbone must be frozen before training");
  }

  const TrainConfig& config() const { return config_; }
  const Adam& optimizer() const { return adam_; }

  // CAA: score the raw batch with both branches, pick the samples they
  // disagree on, and augment (strong for those, light for the rest).
  std::vector<BatchItem> prepare_batch(const std::vector<const data::Sample*>& samples, CaaDecision* decision) {
    std::vector<BatchItem> items;
    items.reserve(samples.size());
    if (!config_.caa_on) {
      for (const auto* s : samples) items.push_back({s->image, s->label, 1.0});
      return items;
    }
    std::vector<double> pp, pd;
    {
      nn::NoGradGuard guard;
      const auto ctx = model_.prepare();
      for (const auto* s : samples) {
        const auto p = model_.branch_live_probabilities(s->image, ctx);
        pp.push_back(p[0]);
        pd.push_back(p[1]);
      }
    }
    auto d = caa_select(pp, pd, config_.rho, config_.w_hard);
    for (std::size_t i = 0; i < samples.size(); ++i)
      items.push_back({augment(samples[i]->image, d.directives[i], aug_rng_), samples[i]->label, d.weights[i]});
    if (decision) *decision = std::move(d);
    return items;
  }

  LossBreakdown step(const std::vector<const data::Sample*>& samples) {
    CaaDecision d;
    const auto items = prepare_batch(samples, &d);
    const auto graph = build_loss(model_, items, config_.lambda_cons);
    auto b = graph.breakdown();
    b.hard_samples = d.selected();
    nn::backward(graph.total);
    adam_.step();
    adam_.zero_grad();
    return b;
  }

 private:
  SpoofPromptModel& model_;
  TrainConfig config_;
  Adam adam_;
  Rng aug_rng_;
};

struct LogRow {
  std::size_t step = 0;
  LossBreakdown loss;
  std::optional<metrics::MetricsSummary> eval;
};

inline constexpr const char* kLogHeader =
    "step\tce_physical\tce_digital\tconsistency_text\tconsistency_visual\ttotal\thard\t"
    "eval_acc\teval_auc\teval_eer\teval_acer";

inline std::string format_log_row(const LogRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\t%zu", r.step, r.loss.ce_physical,
                r.loss.ce_digital, r.loss.consistency_text, r.loss.consistency_visual, r.loss.total,
                r.loss.hard_samples);
  std::string s = buf;
  if (r.eval) {
    std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\t%.6f\t%.6f", r.eval->acc, r.eval->auc, r.eval->eer,
                  r.eval->acer);
    s += buf;
  } else {
    s += "\t-\t-\t-\t-";
  }
  return s;
}

struct TrainingResult {
  std::vector<LogRow> log;
  std::vector<metrics::ScoreRecord> scores;  // final evaluation
  std::optional<metrics::MetricsSummary> summary;
  std::uint64_t backbone_checksum_before = 0;
  std::uint64_t backbone_checksum_after = 0;
};

// Seeded epoch shuffles over the training split, fixed batch order per seed,
// evaluation every eval_every steps and after the last one. Each log row is
// written to `log` as it is produced, when given.
inline TrainingResult run_training(SpoofPromptModel& model, const TrainConfig& config,
                                   const data::Dataset& train_set, const data::Dataset& eval_set,
                                   std::ostream* log = nullptr) {
  config.validate();
  require(!train_set.empty() || config.steps == 0, ErrorCode::input, "training split is empty");
  TrainingResult result;
  result.backbone_checksum_before = model.backbone().checksum();
  Trainer trainer(model, config);
  Rng order_rng(config.seed);
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  if (log) *log << kLogHeader << '\n';
  for (std::size_t step = 1; step <= config.steps; ++step) {
    std::vector<const data::Sample*> batch;
    while (batch.size() < config.batch_size) {
      if (cursor == order.size()) {
        order.resize(train_set.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        order_rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(&train_set[order[cursor++]]);
      if (batch.size() == train_set.size()) break;
    }
    LogRow row;
    row.step = step;
    row.loss = trainer.step(batch);
    const bool last = step == config.steps;
    if (!eval_set.empty() && (last || (config.eval_every && step % config.eval_every == 0))) {
      auto scores = evaluate(model, eval_set);
      row.eval = metrics::summarize(scores);
      if (last) {
        result.scores = std::move(scores);
        result.summary = row.eval;
      }
    }
    if (log) *log << format_log_row(row) << '\n' << std::flush;
    result.log.push_back(std::move(row));
  }
  if (config.steps == 0 && !eval_set.empty()) {
    result.scores = evaluate(model, eval_set);
    result.summary = metrics::summarize(result.scores);
  }
  result.backbone_checksum_after = model.backbone().checksum();
  return result;
}

}  // namespace spluad::train
