#include <gtest/gtest.h>

#include <filesystem>

#include "spluad/core/checkpoint.hpp"
#include "support/grad_cases.hpp"

using namespace spluad;
using namespace spluad::testing;
using nn::Var;

TEST(Tensor, ShapeAndIndexing) {
  Tensor t({2, 3});
  t.at(1, 2) = 5.0;
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t[5], 5.0);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), Error);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    (void)c;
  }
  EXPECT_NE(Rng(1).next_u64(), Rng(2).next_u64());
}

TEST(Rng, TruncatedNormalStaysInsideTwoSigma) {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) EXPECT_LE(std::abs(rng.truncated_normal(0.3)), 0.6);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(3);
  TensorMap m{{"b.weights", random_tensor({3, 4}, rng)}, {"a.bias", random_tensor({7}, rng)}};
  m["c.tiny"] = Tensor::scalar(1e-300);
  const auto path = std::filesystem::temp_directory_path() / "spluad_ckpt_test.ckpt";
  write_checkpoint(path, m);
  const auto back = read_checkpoint(path);
  ASSERT_EQ(back.size(), m.size());
  for (const auto& [name, t] : m) {
    ASSERT_TRUE(back.count(name));
    EXPECT_EQ(back.at(name).shape(), t.shape());
    EXPECT_EQ(back.at(name).values(), t.values());
  }
  EXPECT_TRUE(std::filesystem::exists(manifest_path_for(path)));
}

TEST(Checkpoint, TruncatedFileIsAnIoError) {
  const auto path = std::filesystem::temp_directory_path() / "spluad_ckpt_trunc.ckpt";
  write_checkpoint(path, {{"x", Tensor({100}, 1.0)}});
  std::filesystem::resize_file(path, 40);
  try {
    read_checkpoint(path);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io);
  }
}

TEST(Autograd, SoftmaxValues) {
  const auto p = nn::softmax(Var::constant(Tensor::vector({1.0, 2.0, 3.0})));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(p.value()[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(p.value()[2], std::exp(3.0) / z, 1e-15);
}

TEST(Autograd, SoftmaxTemperatureSharpens) {
  const auto x = Var::constant(Tensor::vector({0.2, 0.1}));
  EXPECT_GT(nn::softmax(x, 0.07).value()[0], nn::softmax(x, 1.0).value()[0]);
}

TEST(Autograd, CosineOfParallelAndOpposite) {
  const auto a = Var::constant(Tensor::vector({1.0, 2.0, 2.0}));
  const auto b = Var::constant(Tensor::vector({2.0, 4.0, 4.0}));
  const auto c = Var::constant(Tensor::vector({-1.0, -2.0, -2.0}));
  EXPECT_NEAR(nn::cosine_similarity(a, b).value().item(), 1.0, 1e-15);
  EXPECT_NEAR(nn::cosine_similarity(a, c).value().item(), -1.0, 1e-15);
}

TEST(Autograd, CosineOfZeroVectorIsDegenerate) {
  const auto a = Var::constant(Tensor::vector({0.0, 0.0}));
  const auto b = Var::constant(Tensor::vector({1.0, 0.0}));
  try {
    nn::cosine_similarity(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate_input);
  }
}

TEST(Autograd, ShapeMismatchIsADimensionError) {
  const auto a = Var::constant(Tensor({2, 3}));
  const auto b = Var::constant(Tensor({3, 2}));
  try {
    nn::add(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dimension);
  }
}

TEST(Autograd, NonFiniteValueIsReportedWithTheOp) {
  const auto a = Var::constant(Tensor::vector({1e308}));
  try {
    nn::scale(a, 10.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::numeric);
    EXPECT_NE(std::string(e.what()).find("scale"), std::string::npos);
  }
}

TEST(Autograd, GradientsAccumulateAcrossUses) {
  Var x = Var::parameter(Tensor::vector({3.0}));
  nn::backward(nn::sum(nn::mul(x, x)));  // d(x^2)/dx = 6
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  nn::backward(nn::sum(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  Var x = Var::parameter(Tensor::vector({1.0, 2.0}));
  Var y;
  {
    nn::NoGradGuard g;
    y = nn::sum(nn::mul(x, x));
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_FALSE(nn::depends_on(y, x));
  nn::backward(y);
  EXPECT_FALSE(x.has_grad());
}

TEST(Autograd, ConstantsNeverReceiveGradients) {
  Var c = Var::constant(Tensor::vector({1.0, 2.0}));
  Var p = Var::parameter(Tensor::vector({0.5, 0.5}));
  nn::backward(nn::sum(nn::mul(c, p)));
  EXPECT_FALSE(c.has_grad());
  EXPECT_EQ(p.grad().values(), (std::vector<double>{1.0, 2.0}));
}

TEST(Attention, CausalRowsIgnoreLaterPositions) {
  Rng rng(8);
  const Tensor q = random_tensor({5, 8}, rng), k = random_tensor({5, 8}, rng), v = random_tensor({5, 8}, rng);
  Tensor k2 = k, v2 = v;
  for (std::size_t c = 0; c < 8; ++c) {
    k2.at(4, c) += 3.0;
    v2.at(4, c) -= 2.0;
  }
  const auto a = nn::attention(Var::constant(q), Var::constant(k), Var::constant(v), 2, true).value();
  const auto b = nn::attention(Var::constant(q), Var::constant(k2), Var::constant(v2), 2, true).value();
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(a.at(r, c), b.at(r, c));
  EXPECT_NE(a.at(4, 0), b.at(4, 0));
}

TEST(Attention, ProbabilityRowsSumToOne) {
  Rng rng(9);
  const auto p = nn::detail::attention_probs(random_tensor({6, 8}, rng), random_tensor({6, 8}, rng), 2, false);
  ASSERT_EQ(p.size(), 2u * 6u * 6u);
  for (std::size_t row = 0; row < 12; ++row) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) s += p[row * 6 + j];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Attention, HeadsMustDivideWidth) {
  Rng rng(1);
  const auto x = Var::constant(random_tensor({3, 6}, rng));
  EXPECT_THROW(nn::attention(x, x, x, 4, false), Error);
}

TEST(LayerNorm, NormalizesEachRow) {
  Rng rng(2);
  const auto x = Var::constant(random_tensor({3, 10}, rng, -5.0, 5.0));
  const auto y = nn::layer_norm(x, Var::constant(Tensor({10}, 1.0)), Var::constant(Tensor({10}))).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0.0, v = 0.0;
    for (double e : y.row(r)) m += e;
    m /= 10.0;
    for (double e : y.row(r)) v += (e - m) * (e - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 10.0, 1.0, 1e-3);
  }
}

TEST(Linear, HandArithmetic) {
  const auto x = Var::constant(Tensor({1, 2}, {1.0, 2.0}));
  const auto w = Var::constant(Tensor({1, 2}, {3.0, 4.0}));
  const auto b = Var::constant(Tensor({1}, {1.0}));
  EXPECT_EQ(nn::linear(x, w, b).value().item(), 12.0);
  const auto id = Var::constant(Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}));
  const auto y = nn::linear(Var::constant(Tensor({1, 2}, {1.0, 0.0})), id, Var::constant(Tensor({2}))).value();
  EXPECT_EQ(y.values(), (std::vector<double>{1.0, 0.0}));
}

TEST(LayerNorm, ConstantAndAlreadyNormalizedRows) {
  const auto one = Var::constant(Tensor({2}, 1.0));
  const auto zero = Var::constant(Tensor({2}));
  const auto flat = nn::layer_norm(Var::constant(Tensor({1, 2}, {1.0, 1.0})), one, zero).value();
  EXPECT_EQ(flat.values(), (std::vector<double>{0.0, 0.0}));
  const auto y = nn::layer_norm(Var::constant(Tensor({1, 2}, {1.0, -1.0})), one, zero, 1e-12).value();
  EXPECT_NEAR(y[0], 1.0, 1e-10);
  EXPECT_NEAR(y[1], -1.0, 1e-10);
}

TEST(Attention, SingleTokenAttendsToItself) {
  Rng rng(5);
  const auto p = nn::AttentionParams::create(4, rng);
  const Tensor x = random_tensor({1, 4}, rng, -1.0, 1.0);
  const auto w = nn::attention_weights(x, p, 2, false);
  for (double v : w) EXPECT_EQ(v, 1.0);
  const auto xv = Var::constant(x);
  const auto expect = nn::linear(nn::linear(xv, p.value), p.out).value();
  const auto got = nn::multi_head_attention(xv, p, 2, false).value();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(got[i], expect[i], 1e-15);
}

TEST(Attention, DuplicatedTokenMatchesBruteForce) {
  // Tokens a, b, b: a query sees b's value with weight 2e^s / (e^r + 2e^s).
  Rng rng(6);
  const auto p = nn::AttentionParams::create(2, rng);
  const Tensor a = random_tensor({1, 2}, rng, -1.0, 1.0), b = random_tensor({1, 2}, rng, -1.0, 1.0);
  const Tensor x({3, 2}, {a[0], a[1], b[0], b[1], b[0], b[1]});
  const auto q = nn::linear(Var::constant(x), p.query).value();
  const auto k = nn::linear(Var::constant(x), p.key).value();
  const auto v = nn::linear(Var::constant(x), p.value).value();
  const double scale = 1.0 / std::sqrt(2.0);
  const auto out = nn::multi_head_attention(Var::constant(x), p, 1, false).value();
  for (std::size_t row = 0; row < 3; ++row) {
    const double r = (q.at(row, 0) * k.at(0, 0) + q.at(row, 1) * k.at(0, 1)) * scale;
    const double s = (q.at(row, 0) * k.at(1, 0) + q.at(row, 1) * k.at(1, 1)) * scale;
    const double wa = std::exp(r) / (std::exp(r) + 2.0 * std::exp(s)), wb = 1.0 - wa;
    std::vector<double> mixed{wa * v.at(0, 0) + wb * v.at(1, 0), wa * v.at(0, 1) + wb * v.at(1, 1)};
    for (std::size_t j = 0; j < 2; ++j) {
      double o = p.out.bias.value()[j];
      for (std::size_t c = 0; c < 2; ++c) o += p.out.weight.value().at(j, c) * mixed[c];
      EXPECT_NEAR(out.at(row, j), o, 1e-12);
    }
  }
  for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(out.at(1, j), out.at(2, j));
}

TEST(Block, ZeroWeightsPassInputThrough) {
  Rng rng(7);
  auto p = nn::BlockParams::create(4, 8, rng);
  p.visit("b", [](const std::string& name, Var& v) {
    if (name.find(".ln_") == std::string::npos) v.mutable_value().fill(0.0);
  });
  const Tensor x = random_tensor({3, 4}, rng, -2.0, 2.0);
  const auto y = nn::transformer_block(Var::constant(x), p, 2, true).value();
  EXPECT_EQ(y.values(), x.values());
  const Tensor one = random_tensor({1, 4}, rng, -2.0, 2.0);
  EXPECT_EQ(nn::transformer_block(Var::constant(one), p, 2, false).value().shape(), one.shape());
}

TEST(Autograd, CosineIsScaleInvariant) {
  Rng rng(8);
  for (int n = 0; n < 20; ++n) {
    const Tensor a = random_tensor({6}, rng, -1.0, 1.0), b = random_tensor({6}, rng, -1.0, 1.0);
    const double c = nn::cosine_similarity(Var::constant(a), Var::constant(b)).value().item();
    const double s = nn::cosine_similarity(nn::scale(Var::constant(a), 7.5), nn::scale(Var::constant(b), 0.01))
                         .value()
                         .item();
    EXPECT_NEAR(c, s, 1e-12);
  }
  const double h = nn::cosine_similarity(Var::constant(Tensor::vector({1.0, 0.0})),
                                         Var::constant(Tensor::vector({1.0, 1.0})))
                       .value()
                       .item();
  EXPECT_NEAR(h, 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Autograd, SoftmaxOfOneZero) {
  const auto p = nn::softmax(Var::constant(Tensor::vector({1.0, 0.0}))).value();
  EXPECT_NEAR(p[0], 0.7311, 1e-4);
  EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
}

class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const auto factories = op_grad_cases();
  Rng rng(1000 + GetParam());
  auto c = factories[GetParam()](rng);
  const auto r = check_gradients(c.f, c.params, rng, 20, 1e-5);
  EXPECT_LE(r.max_rel_error, 1e-4) << c.name << " worst " << r.worst;
  EXPECT_GE(r.coordinates, std::min<std::size_t>(20, c.params.front().value().size()));
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range<std::size_t>(0, op_grad_cases().size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                           Rng rng(0);
                           return op_grad_cases()[info.param](rng).name;
                         });
