#include <gtest/gtest.h>

#include <filesystem>
#include <limits>
#include <set>
#include <sstream>

#include "support/checks.hpp"
#include "spluad/train/experiment.hpp"
#include "spluad/train/run_dir.hpp"

using namespace spluad;
using namespace spluad::testing;
using nn::Var;

namespace {

Var vec(std::initializer_list<double> v) { return Var::constant(Tensor::vector(v)); }

// A run small enough for unit tests: tiny encoder, 8x8 images.
train::ExperimentConfig tiny_experiment(std::size_t steps) {
  train::ExperimentConfig c;
  c.encoder = tiny_encoder();
  c.prompt.context_size = 2;
  c.prompt.text_prompts = 2;
  c.prompt.visual_prompts = 2;
  c.train.steps = steps;
  c.train.batch_size = 6;
  c.train.seed = 4;
  c.synth.live = 12;
  c.synth.physical = 6;
  c.synth.digital = 6;
  c.synth.image_size = 8;
  c.synth.alpha = 0.8;
  return c;
}

Tensor gray_image(std::size_t n, double v) { return Tensor({n, n, 3}, v); }

}  // namespace

TEST(Loss, UniformPredictionsCostLnTwo) {
  const auto r = train::weighted_ce({vec({0.3, 0.3})}, {1}, {1.0});
  EXPECT_NEAR(r.loss.value().item(), std::log(2.0), 1e-15);
  EXPECT_FALSE(r.empty);
}

TEST(Loss, ConfidentCorrectPredictionCostsNearlyNothing) {
  EXPECT_LT(train::weighted_ce({vec({40.0, 0.0})}, {0}, {1.0}).loss.value().item(), 1e-15);
}

TEST(Loss, WeightedMeanConvention) {
  const Var l0 = vec({1.0, 0.0}), l1 = vec({0.0, 2.0});
  const double a = train::cross_entropy(l0, 1).value().item();
  const double b = train::cross_entropy(l1, 0).value().item();
  const auto r = train::weighted_ce({l0, l1}, {1, 0}, {1.0, 2.0});
  EXPECT_NEAR(r.loss.value().item(), (a + 2.0 * b) / 3.0, 1e-15);
}

TEST(Loss, EmptyBranchContributesZeroWithAFlag) {
  const auto r = train::weighted_ce({}, {}, {});
  EXPECT_TRUE(r.empty);
  EXPECT_EQ(r.loss.value().item(), 0.0);
}

TEST(Loss, ConsistencyReferencePoints) {
  const Var a = vec({1.0, 0.0}), b = vec({0.0, 3.0}), c = vec({-2.0, 0.0});
  auto [same, _] = train::consistency_loss({a}, {a}, {a}, {a});
  EXPECT_NEAR(same.value().item(), 0.0, 1e-15);
  auto [ortho, opposite] = train::consistency_loss({a}, {b}, {a}, {c});
  EXPECT_NEAR(ortho.value().item(), 1.0, 1e-15);
  EXPECT_NEAR(opposite.value().item(), 2.0, 1e-15);
}

TEST(Loss, ConsistencyOfZeroVectorIsDegenerate) {
  try {
    train::consistency_loss({vec({0.0, 0.0})}, {vec({1.0, 0.0})}, {vec({1.0, 0.0})}, {vec({1.0, 0.0})});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate_input);
  }
}

TEST(Loss, BreakdownIsAdditive) {
  auto tiny = make_tiny_model(2, 2, 2, 3);
  Rng rng(4);
  const double lambda = 0.35;
  const auto g = train::build_loss(*tiny.model, mixed_batch(8, rng), lambda).breakdown();
  EXPECT_NEAR(g.total, g.ce_physical + g.ce_digital + lambda * (g.consistency_text + g.consistency_visual), 1e-12);
}

TEST(Loss, AttackOnlyFeedsItsOwnBranch) {
  auto tiny = make_tiny_model(1, 1, 1, 3);
  Rng rng(5);
  std::vector<train::BatchItem> batch{{random_image(8, rng), data::Label::physical_attack, 1.0}};
  const auto g = train::build_loss(*tiny.model, batch, 1.0);
  EXPECT_FALSE(g.physical_empty);
  EXPECT_TRUE(g.digital_empty);
  EXPECT_EQ(g.ce_digital.value().item(), 0.0);
}

TEST(Loss, ConsistencyVanishesWithoutPromptsOrContext) {
  auto tiny = make_tiny_model(0, 0, 0, 3);
  Rng rng(6);
  const auto g = train::build_loss(*tiny.model, mixed_batch(8, rng), 1.0).breakdown();
  EXPECT_NEAR(g.consistency_text, 0.0, 1e-15);
  EXPECT_NEAR(g.consistency_visual, 0.0, 1e-15);
}

TEST(Loss, PromptedLossMatchesFiniteDifferences) {
  Rng rng(8);
  auto c = prompted_loss_case(rng);
  const auto r = check_gradients(c.f, c.params, rng, 20, 1e-5);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Loss, NonFiniteLossNamesTheOffendingOp) {
  auto tiny = make_tiny_model(0, 1, 1, 3);
  tiny.model->bundle(prompt::Branch::physical).visual[0].mutable_value()[0] = std::numeric_limits<double>::infinity();
  Rng rng(1);
  try {
    train::build_loss(*tiny.model, mixed_batch(8, rng), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::numeric);
    EXPECT_NE(std::string(e.what()).find("non-finite value produced by op"), std::string::npos) << e.what();
  }
}

TEST(Caa, ZeroRhoSelectsNothing) {
  const auto d = train::caa_select({0.9, 0.1, 0.5}, {0.1, 0.9, 0.5}, 0.0, 2.0);
  EXPECT_EQ(d.selected(), 0u);
  EXPECT_EQ(d.weights, (std::vector<double>{1.0, 1.0, 1.0}));
}

TEST(Caa, QuantileExample) {
  // disagreements {0.9, 0.1, 0.1, 0.1}
  const auto d = train::caa_select({0.95, 0.6, 0.2, 0.5}, {0.05, 0.5, 0.3, 0.4}, 0.25, 2.0);
  ASSERT_EQ(d.disagreement.size(), 4u);
  EXPECT_NEAR(d.disagreement[0], 0.9, 1e-15);
  EXPECT_EQ(d.weights, (std::vector<double>{2.0, 1.0, 1.0, 1.0}));
  EXPECT_EQ(d.directives[0], train::Directive::strong);
  EXPECT_EQ(d.directives[1], train::Directive::light);
}

TEST(Caa, EqualDisagreementSelectsNothing) {
  const auto d = train::caa_select({0.4, 0.7, 0.2, 0.9}, {0.4, 0.7, 0.2, 0.9}, 0.5, 2.0);
  EXPECT_EQ(d.selected(), 0u);
}

TEST(Caa, NeverSelectsMoreThanTheQuantile) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.index(40);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = std::round(rng.uniform() * 4.0) / 4.0;
      b[i] = std::round(rng.uniform() * 4.0) / 4.0;
    }
    const double rho = rng.uniform(0.0, 0.99);
    const auto d = train::caa_select(a, b, rho, 3.0);
    EXPECT_LE(d.selected(), static_cast<std::size_t>(std::floor(rho * static_cast<double>(n))));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (d.directives[i] == train::Directive::strong && d.directives[j] == train::Directive::light)
          EXPECT_GT(d.disagreement[i], d.disagreement[j]);
  }
}

TEST(Caa, ParameterChecks) {
  EXPECT_THROW(train::caa_select({0.1}, {0.1, 0.2}, 0.3, 2.0), Error);
  EXPECT_THROW(train::caa_select({0.1}, {0.2}, 1.0, 2.0), Error);
  EXPECT_THROW(train::caa_select({0.1}, {0.2}, 0.3, 0.5), Error);
}

TEST(Augment, LightWithoutFlipOrJitterIsIdentity) {
  Rng rng(3);
  const Tensor img = random_image(8, rng);
  EXPECT_EQ(train::apply_light(img, false, 0.0).values(), img.values());
}

TEST(Augment, FlipMirrorsColumns) {
  Rng rng(3);
  const Tensor img = random_image(6, rng);
  const Tensor f = train::apply_light(img, true, 0.0);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(f[(2 * 6 + 0) * 3 + c], img[(2 * 6 + 5) * 3 + c]);
}

TEST(Augment, CutoutPaintsExactlyOneGraySquare) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    train::AugmentRecord rec;
    const Tensor img = gray_image(32, 0.9);
    const Tensor out = train::augment(img, train::Directive::strong, seed, &rec);
    if (rec.kind != train::StrongKind::cutout) continue;
    const double area = static_cast<double>(rec.cutout_side * rec.cutout_side) / (32.0 * 32.0);
    EXPECT_GE(area, 0.10);
    EXPECT_LE(area, 0.25);
    const double bright = 0.9 * (1.0 + rec.jitter);
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        const bool inside = y >= rec.cutout_top && y < rec.cutout_top + rec.cutout_side && x >= rec.cutout_left &&
                            x < rec.cutout_left + rec.cutout_side;
        ASSERT_NEAR(out[(y * 32 + x) * 3], inside ? 0.5 : std::min(1.0, bright), 1e-12);
      }
  }
}

TEST(Augment, SameSeedSameOutputAndStaysInRange) {
  Rng rng(4);
  const Tensor img = random_image(16, rng);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Tensor a = train::augment(img, train::Directive::strong, seed);
    EXPECT_EQ(a.values(), train::augment(img, train::Directive::strong, seed).values());
    for (double v : a.values()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(Augment, EveryStrongKindIsReachable) {
  std::set<train::StrongKind> seen;
  const Tensor img = gray_image(8, 0.4);
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    train::AugmentRecord rec;
    train::augment(img, train::Directive::strong, seed, &rec);
    EXPECT_TRUE(rec.strong);
    seen.insert(rec.kind);
  }
  EXPECT_EQ(seen.size(), 3u);
}

TEST(Augment, NonSquareImageIsAnInputError) {
  Rng rng(1);
  EXPECT_THROW(train::augment(Tensor({4, 5, 3}), train::Directive::light, rng), Error);
}

// Reference Adam written out step by step for one scalar.
TEST(Adam, MatchesHandComputedSteps) {
  Var w = Var::parameter(Tensor::vector({0.5}), "w");
  train::Adam opt({w}, {0.1, 0.9, 0.999, 1e-8});
  const double grads[] = {2.0, -1.0, 0.5};
  double m = 0.0, v = 0.0, ref = 0.5;
  for (int t = 1; t <= 3; ++t) {
    const double g = grads[t - 1];
    nn::backward(nn::scale(nn::sum(w), g));
    opt.step();
    opt.zero_grad();
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
    ref -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(w.value()[0], ref, 1e-15) << "step " << t;
  }
  EXPECT_NEAR(w.value()[0], 0.5 - 0.1, 0.2);
}

TEST(Adam, ZeroLearningRateChangesNothing) {
  Var w = Var::parameter(Tensor::vector({0.5, -0.25}), "w");
  train::Adam opt({w}, {0.0});
  nn::backward(nn::sum(nn::mul(w, w)));
  opt.step();
  EXPECT_EQ(w.value().values(), (std::vector<double>{0.5, -0.25}));
}

TEST(Training, FrozenBackboneIsRequired) {
  auto tiny = make_tiny_model(1, 1, 1, 3);
  tiny.backbone->set_frozen(false);
  try {
    train::Trainer t(*tiny.model, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
}

TEST(Training, BackboneIsUntouchedAndPromptsMove) {
  const auto c = tiny_experiment(6);
  const auto split = train::load_split(c);
  auto fresh = train::build_model(c);
  const auto init = fresh.model->to_tensors();
  const auto r = train::run_experiment(c, split);
  EXPECT_EQ(r.training.backbone_checksum_before, r.training.backbone_checksum_after);
  EXPECT_EQ(r.model.backbone->checksum(), fresh.backbone->checksum());
  const auto after = r.model.model->to_tensors();
  EXPECT_NE(after.at("prompts.physical.text.0").values(), init.at("prompts.physical.text.0").values());
  EXPECT_NE(after.at("context.w_image").values(), init.at("context.w_image").values());
  EXPECT_EQ(after.at("context.centers").values(), init.at("context.centers").values());
  ASSERT_EQ(r.training.log.size(), 6u);
  EXPECT_TRUE(r.training.summary.has_value());
}

TEST(Training, SameSeedIsBitIdentical) {
  const auto c = tiny_experiment(4);
  const auto split = train::load_split(c);
  std::ostringstream la, lb;
  const auto a = train::run_experiment(c, split, &la);
  const auto b = train::run_experiment(c, split, &lb);
  EXPECT_EQ(la.str(), lb.str());
  const auto ta = train::model_tensors(a.model), tb = train::model_tensors(b.model);
  ASSERT_EQ(ta.size(), tb.size());
  for (const auto& [name, t] : ta) EXPECT_EQ(t.values(), tb.at(name).values()) << name;
  auto c2 = c;
  c2.train.seed = 5;
  const auto d = train::run_experiment(c2, split);
  EXPECT_NE(train::model_tensors(d.model).at("prompts.digital.visual.0").values(),
            ta.at("prompts.digital.visual.0").values());
}

TEST(Training, LogHasTheDocumentedColumns) {
  auto c = tiny_experiment(2);
  c.train.eval_every = 1;
  std::ostringstream log;
  train::run_experiment(c, train::load_split(c), &log);
  std::istringstream is(log.str());
  std::string header, row;
  std::getline(is, header);
  EXPECT_EQ(header, train::kLogHeader);
  std::getline(is, row);
  EXPECT_EQ(std::count(row.begin(), row.end(), '\t'), std::count(header.begin(), header.end(), '\t'));
  EXPECT_EQ(row.find("1\t"), 0u);
  EXPECT_EQ(row.find('-'), std::string::npos);
}

TEST(Training, ZeroStepsLeavesTheInitialization) {
  const auto c = tiny_experiment(0);
  const auto r = train::run_experiment(c, train::load_split(c));
  const auto init = train::model_tensors(train::build_model(c));
  for (const auto& [name, t] : train::model_tensors(r.model)) EXPECT_EQ(t.values(), init.at(name).values()) << name;
  EXPECT_TRUE(r.training.log.empty());
  EXPECT_TRUE(r.training.summary.has_value());
}

TEST(Training, ZeroLearningRateStillReportsLoss) {
  auto c = tiny_experiment(2);
  c.train.learning_rate = 0.0;
  auto m = train::build_model(c);
  auto split = train::load_split(c);
  const auto before = m.model->to_tensors();
  train::Trainer t(*m.model, c.train);
  std::vector<const data::Sample*> batch;
  for (std::size_t i = 0; i < 4; ++i) batch.push_back(&split.train[i]);
  const auto loss = t.step(batch);
  EXPECT_GT(loss.total, 0.0);
  for (const auto& [name, v] : m.model->to_tensors()) EXPECT_EQ(v.values(), before.at(name).values()) << name;
}

TEST(Training, ScpgOffDropsTheContext) {
  auto c = tiny_experiment(1);
  c.train.scpg_on = false;
  auto m = train::build_model(c);
  EXPECT_EQ(m.model->bank().size(), 0u);
  EXPECT_FALSE(m.model->to_tensors().count("context.w_text"));
  const auto ctx = m.model->prepare();
  EXPECT_FALSE(ctx.text_context.defined());
}

TEST(Training, CaaOffFeedsRawImages) {
  auto c = tiny_experiment(1);
  c.train.caa_on = false;
  auto m = train::build_model(c);
  auto split = train::load_split(c);
  train::Trainer t(*m.model, c.train);
  std::vector<const data::Sample*> batch{&split.train[0], &split.train[1]};
  train::CaaDecision d;
  const auto items = t.prepare_batch(batch, &d);
  EXPECT_EQ(items[0].image.values(), split.train[0].image.values());
  EXPECT_EQ(items[1].weight, 1.0);
}

TEST(Config, JsonRoundTrip) {
  auto c = tiny_experiment(17);
  c.train.rho = 0.2;
  c.synth.alpha = 0.4;
  c.manifest = "corpus/manifest.csv";
  const auto back = train::experiment_from_json(train::to_json(c));
  EXPECT_EQ(train::to_json(back), train::to_json(c));
  EXPECT_EQ(back.train.steps, 17u);
  EXPECT_EQ(back.encoder.image_size, 8u);
}

TEST(Config, UnknownKeyIsAConfigError) {
  auto j = train::to_json(tiny_experiment(1));
  j["train"]["learning_rte"] = 0.1;
  try {
    train::experiment_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
    EXPECT_NE(std::string(e.what()).find("train.learning_rte"), std::string::npos);
  }
}

TEST(Config, WrongTypeIsAConfigError) {
  auto j = train::to_json(tiny_experiment(1));
  j["prompt"]["context_size"] = "four";
  EXPECT_THROW(train::experiment_from_json(j), Error);
}

TEST(Config, PartialDocumentKeepsDefaults) {
  const auto c = train::experiment_from_json(nlohmann::json{{"train", {{"steps", 5}}}});
  EXPECT_EQ(c.train.steps, 5u);
  EXPECT_EQ(c.train.batch_size, train::TrainConfig{}.batch_size);
  EXPECT_EQ(c.encoder.image_size, clip::EncoderConfig{}.image_size);
}

TEST(Checkpoint, ModelRoundTripThroughDisk) {
  const auto c = tiny_experiment(3);
  const auto r = train::run_experiment(c, train::load_split(c));
  const auto path = std::filesystem::temp_directory_path() / "spluad_model.ckpt";
  write_checkpoint(path, train::model_tensors(r.model));
  const auto loaded = read_checkpoint(path);
  auto m = train::build_model(c, &loaded);
  Rng rng(2);
  const Tensor img = random_image(8, rng);
  nn::NoGradGuard guard;
  const auto ctx_a = r.model.model->prepare(), ctx_b = m.model->prepare();
  const auto pa = r.model.model->branch_live_probabilities(img, ctx_a);
  const auto pb = m.model->branch_live_probabilities(img, ctx_b);
  EXPECT_EQ(pa, pb);
}

TEST(RunDir, RefusesToOverwriteWithoutForce) {
  const auto dir = std::filesystem::temp_directory_path() / "spluad_run_dir";
  std::filesystem::remove_all(dir);
  train::prepare_run_dir(dir, false);
  std::ofstream(dir / "x.txt") << "data";
  try {
    train::prepare_run_dir(dir, false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io);
    EXPECT_NE(std::string(e.what()).find("--force"), std::string::npos);
  }
  train::prepare_run_dir(dir, true);
  EXPECT_TRUE(std::filesystem::is_empty(dir));
}

TEST(RunDir, ManifestIsReproducible) {
  const auto dir = std::filesystem::temp_directory_path() / "spluad_run_manifest";
  std::string first;
  for (int round = 0; round < 2; ++round) {
    train::prepare_run_dir(dir, true);
    std::ofstream(dir / "b.txt") << "bravo";
    std::filesystem::create_directories(dir / "sub");
    std::ofstream(dir / "sub" / "a.txt") << "alpha";
    train::write_run_manifest(dir, "train", {{"k", 1}}, 7, "abc");
    const auto text = train::read_file_bytes(dir / train::kRunManifestName);
    if (round == 0) first = text;
    else EXPECT_EQ(text, first);
  }
  const auto j = nlohmann::json::parse(first);
  ASSERT_EQ(j["files"].size(), 2u);
  EXPECT_EQ(j["files"][0]["path"], "b.txt");
  EXPECT_EQ(j["files"][1]["path"], "sub/a.txt");
  EXPECT_EQ(j["files"][0]["fnv1a"], train::hex64(train::fnv1a_bytes("bravo")));
}

TEST(RunDir, FnvKnownVector) {
  // FNV-1a 64 of "a" is af63dc4c8601ec8c.
  EXPECT_EQ(train::hex64(train::fnv1a_bytes("a")), "af63dc4c8601ec8c");
}
