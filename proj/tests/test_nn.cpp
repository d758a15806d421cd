#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_support.hpp"

namespace rgcoref {
namespace {

using testing::random_matrix;

TEST(Tensor, ShapeChecks) {
  auto a = Tensor<double>::matrix(2, 3);
  auto b = Tensor<double>::matrix(2, 2);
  EXPECT_THROW(matmul(a, b), ShapeError);
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>(3)), ShapeError);
  EXPECT_EQ(matmul(b, a).shape(), (Shape{2, 3}));
}

TEST(Tensor, TransposedProductsMatchPlainProduct) {
  Rng rng(3);
  auto a = random_matrix(4, 3, rng);
  auto b = random_matrix(4, 5, rng);
  auto c = random_matrix(5, 3, rng);
  auto tn = matmul_tn(a, b);  // a^T b
  auto nt = matmul_nt(a, c);  // a c^T
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += a(k, i) * b(k, j);
      EXPECT_NEAR(tn(i, j), s, 1e-14);
    }
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k) s += a(i, k) * c(j, k);
      EXPECT_NEAR(nt(i, j), s, 1e-14);
    }
}

TEST(Tensor, ConcatAndSliceColumns) {
  auto a = Tensor<double>::matrix({{1, 2}, {3, 4}});
  auto b = Tensor<double>::matrix({{5}, {6}});
  auto c = concat_cols<double>({&a, &b});
  EXPECT_EQ(c, Tensor<double>::matrix({{1, 2, 5}, {3, 4, 6}}));
  EXPECT_EQ(slice_cols(c, 1, 2), Tensor<double>::matrix({{2, 5}, {4, 6}}));
}

TEST(Random, DeterministicStreamsAndRanges) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a(), b());
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = uniform01(r);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(uniform_index(r, 7), 7u);
  }
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_EQ(derive_seed(9, 4), derive_seed(9, 4));
}

TEST(Random, ShuffleIsPermutation) {
  Rng r(5);
  auto v = testing::iota(50);
  shuffle(std::span<std::size_t>(v), r);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, testing::iota(50));
  EXPECT_NE(v, testing::iota(50));
}

TEST(Random, NormalMoments) {
  Rng r(11);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = standard_normal(r);
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Hyper, ValidationAndSchedule) {
  Hyper h;
  EXPECT_NO_THROW(h.validate());
  EXPECT_DOUBLE_EQ(h.learning_rate(0), 1e-3);
  EXPECT_DOUBLE_EQ(h.learning_rate(2), 1e-3 * 0.95 * 0.95);
  for (auto bad : {0.0, 1.5}) {
    Hyper x;
    x.lr_decay = bad;
    EXPECT_THROW(x.validate(), std::invalid_argument);
  }
  Hyper d;
  d.dropout_p = 1.0;
  EXPECT_THROW(d.validate(), std::invalid_argument);
  Hyper b;
  b.adam_beta1 = 1.0;
  EXPECT_THROW(b.validate(), std::invalid_argument);
}

TEST(Linear, IdentityInput) {
  auto x = Tensor<double>::matrix({{1, 0}, {0, 1}});
  auto W = Tensor<double>::matrix({{1, 2}, {3, 4}});
  auto y = linear(x, W, Tensor<double>::vector(2));
  EXPECT_EQ(y, W);
}

TEST(Linear, EmptyBatch) {
  auto x = Tensor<double>::matrix(0, 3);
  Rng rng(1);
  auto W = random_matrix(3, 2, rng);
  auto y = linear(x, W, Tensor<double>::vector(2, 1.0));
  EXPECT_EQ(y.shape(), (Shape{0, 2}));
  auto g = linear_backward(x, W, Tensor<double>::matrix(0, 2));
  for (double v : g.dW.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.db.values()) EXPECT_EQ(v, 0.0);
}

TEST(Linear, ShapeMismatch) {
  EXPECT_THROW(linear(Tensor<double>::matrix(2, 3), Tensor<double>::matrix(2, 2), Tensor<double>::vector(2)),
               ShapeError);
  EXPECT_THROW(linear(Tensor<double>::matrix(2, 3), Tensor<double>::matrix(3, 2), Tensor<double>::vector(3)),
               ShapeError);
}

// Weighted-sum loss L = sum(C * f(x)) turns any layer into a scalar closure.
double weighted_sum(const Tensor<double>& y, const Tensor<double>& c) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * c[i];
  return s;
}

TEST(Linear, WeightGradientMatchesCentralDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_matrix(4, 3, rng);
    auto W = random_matrix(3, 5, rng);
    auto b = random_matrix(1, 5, rng);
    b.reshape({5});
    auto C = random_matrix(4, 5, rng);
    auto g = linear_backward(x, W, C);
    const double eps = 1e-6;
    for (std::size_t i = 0; i < W.size(); ++i) {
      auto Wp = W, Wm = W;
      Wp[i] += eps;
      Wm[i] -= eps;
      const double num = (weighted_sum(linear(x, Wp, b), C) - weighted_sum(linear(x, Wm, b), C)) / (2 * eps);
      EXPECT_LT(relative_error(g.dW[i], num, 0.0), 1e-7) << i;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto xp = x, xm = x;
      xp[i] += eps;
      xm[i] -= eps;
      const double num = (weighted_sum(linear(xp, W, b), C) - weighted_sum(linear(xm, W, b), C)) / (2 * eps);
      EXPECT_LT(relative_error(g.dx[i], num, 0.0), 1e-7);
    }
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0;
      for (std::size_t r = 0; r < 4; ++r) s += C(r, j);
      EXPECT_NEAR(g.db[j], s, 1e-14);
    }
  }
}

TEST(Activations, ReluAndSigmoidValues) {
  auto x = Tensor<double>::matrix({{-1, 2}});
  EXPECT_EQ(relu(x), Tensor<double>::matrix({{0, 2}}));
  EXPECT_EQ(relu_backward(x, Tensor<double>::matrix({{5, 7}})), Tensor<double>::matrix({{0, 7}}));
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(30.0), 1.0, 1e-12);
  EXPECT_NEAR(sigmoid(-30.0), 0.0, 1e-12);
  EXPECT_GT(sigmoid(-800.0), -1.0);
  EXPECT_TRUE(std::isfinite(sigmoid(-800.0)));
  auto y = sigmoid(Tensor<double>::matrix({{-30, 30}}));
  auto dy = sigmoid_backward(y, Tensor<double>::matrix({{1, 1}}));
  EXPECT_TRUE(dy.all_finite());
  EXPECT_NEAR(dy[0], y[0] * (1 - y[0]), 1e-30);
}

TEST(Activations, SigmoidGradientMatchesClosedForm) {
  Rng rng(2);
  auto x = random_matrix(3, 4, rng, -5, 5);
  auto y = sigmoid(x);
  auto dy = sigmoid_backward(y, Tensor<double>(x.shape(), 1.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = 1 / (1 + std::exp(-x[i]));
    EXPECT_NEAR(y[i], s, 1e-15);
    EXPECT_NEAR(dy[i], s * (1 - s), 1e-15);
  }
}

struct BnFixture {
  Tensor<double> gamma, beta, mean, var;
  explicit BnFixture(std::size_t f)
      : gamma(Tensor<double>::vector(f, 1.0)),
        beta(Tensor<double>::vector(f)),
        mean(Tensor<double>::vector(f)),
        var(Tensor<double>::vector(f, 1.0)) {}
  BatchNormParams<double> params() { return {gamma, beta, mean, var}; }
};

TEST(BatchNorm, ConstantColumnGivesBeta) {
  BnFixture bn(2);
  bn.gamma = Tensor<double>({2}, {2.0, 3.0});
  bn.beta = Tensor<double>({2}, {0.5, -1.0});
  auto x = Tensor<double>::matrix({{4, 1}, {4, 2}, {4, 3}});
  auto y = batchnorm(x, bn.params(), Mode::kTrain, 1e-5, 0.1);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(y(r, 0), 0.5);
  EXPECT_TRUE(y.all_finite());
}

TEST(BatchNorm, EvalWithUnitStatsIsAffine) {
  BnFixture bn(2);
  bn.gamma = Tensor<double>({2}, {2.0, -1.0});
  bn.beta = Tensor<double>({2}, {0.25, 3.0});
  auto x = Tensor<double>::matrix({{1, 2}, {-3, 0.5}});
  const double eps = 1e-5;
  auto y = batchnorm(x, bn.params(), Mode::kEval, eps, 0.1);
  const double s = 1 / std::sqrt(1 + eps);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(y(r, c), bn.gamma[c] * x(r, c) * s + bn.beta[c], 1e-15);
  // Eval never touches the running statistics, even for one row.
  auto one = Tensor<double>::matrix({{5, 6}});
  EXPECT_NO_THROW(batchnorm(one, bn.params(), Mode::kEval, eps, 0.1));
  EXPECT_EQ(bn.mean, Tensor<double>::vector(2));
  EXPECT_EQ(bn.var, Tensor<double>::vector(2, 1.0));
}

TEST(BatchNorm, TrainNeedsTwoRows) {
  BnFixture bn(2);
  EXPECT_THROW(batchnorm(Tensor<double>::matrix(1, 2), bn.params(), Mode::kTrain, 1e-5, 0.1),
               std::invalid_argument);
}

TEST(BatchNorm, TrainStandardizesAndUpdatesRunningStats) {
  BnFixture bn(1);
  auto x = Tensor<double>::matrix({{1}, {2}, {3}, {6}});
  auto y = batchnorm(x, bn.params(), Mode::kTrain, 0.0 + 1e-12, 0.1);
  double mean = 0, sq = 0;
  for (double v : y.values()) mean += v;
  for (double v : y.values()) sq += v * v;
  EXPECT_NEAR(mean / 4, 0.0, 1e-12);
  EXPECT_NEAR(sq / 4, 1.0, 1e-9);
  // batch mean 3, population var 3.5, unbiased var 14/3
  EXPECT_NEAR(bn.mean[0], 0.1 * 3.0, 1e-15);
  EXPECT_NEAR(bn.var[0], 0.9 * 1.0 + 0.1 * 14.0 / 3.0, 1e-15);
}

double bn_loss(const Tensor<double>& x, const Tensor<double>& g, const Tensor<double>& b, Mode mode,
               const Tensor<double>& C) {
  auto mean = Tensor<double>::vector(g.size(), 0.3);
  auto var = Tensor<double>::vector(g.size(), 1.7);
  return weighted_sum(batchnorm(x, BatchNormParams<double>{g, b, mean, var}, mode, 1e-5, 0.1), C);
}

TEST(BatchNorm, GradientsMatchCentralDifferences) {
  Rng rng(19);
  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    auto x = random_matrix(5, 3, rng, -2, 2);
    auto g = random_matrix(1, 3, rng, 0.5, 1.5);
    g.reshape({3});
    auto b = random_matrix(1, 3, rng);
    b.reshape({3});
    auto C = random_matrix(5, 3, rng);
    auto mean = Tensor<double>::vector(3, 0.3);
    auto var = Tensor<double>::vector(3, 1.7);
    BatchNormCache<double> cache;
    batchnorm(x, BatchNormParams<double>{g, b, mean, var}, mode, 1e-5, 0.1, &cache);
    auto grads = batchnorm_backward(cache, g, C);
    const double eps = 1e-6;
    double worst = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto xp = x, xm = x;
      xp[i] += eps;
      xm[i] -= eps;
      const double num = (bn_loss(xp, g, b, mode, C) - bn_loss(xm, g, b, mode, C)) / (2 * eps);
      worst = std::max(worst, relative_error(grads.dx[i], num, 1e-6));
    }
    for (std::size_t i = 0; i < 3; ++i) {
      auto gp = g, gm = g, bp = b, bm = b;
      gp[i] += eps;
      gm[i] -= eps;
      bp[i] += eps;
      bm[i] -= eps;
      worst = std::max(worst, relative_error(grads.dgamma[i],
                                             (bn_loss(x, gp, b, mode, C) - bn_loss(x, gm, b, mode, C)) / (2 * eps), 1e-6));
      worst = std::max(worst, relative_error(grads.dbeta[i],
                                             (bn_loss(x, g, bp, mode, C) - bn_loss(x, g, bm, mode, C)) / (2 * eps), 1e-6));
    }
    EXPECT_LT(worst, 1e-6) << (mode == Mode::kTrain ? "train" : "eval");
  }
}

TEST(Dropout, IdentityCases) {
  Rng rng(1);
  auto x = random_matrix(3, 3, rng);
  Tensor<double> mask;
  EXPECT_EQ(dropout(x, 0.0, Mode::kTrain, rng, &mask), x);
  EXPECT_EQ(mask, Tensor<double>(x.shape(), 1.0));
  EXPECT_EQ(dropout(x, 0.0, Mode::kEval, rng), x);
  EXPECT_EQ(dropout(x, 0.7, Mode::kEval, rng), x);
  EXPECT_THROW(dropout(x, 1.0, Mode::kTrain, rng), std::invalid_argument);
}

TEST(Dropout, KeptFractionAndMean) {
  Rng rng(123);
  const std::size_t n = 100000;
  auto x = Tensor<double>::matrix(1, n);
  Rng src(5);
  for (auto& v : x.values()) v = uniform(src, 0.5, 1.5);
  Tensor<double> mask;
  auto y = dropout(x, 0.5, Mode::kTrain, rng, &mask);
  std::size_t kept = 0;
  double in_sum = 0, out_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    kept += mask[i] != 0.0;
    ASSERT_TRUE(mask[i] == 0.0 || mask[i] == 2.0);
    in_sum += x[i];
    out_sum += y[i];
  }
  EXPECT_NEAR(static_cast<double>(kept) / n, 0.5, 0.01);
  EXPECT_NEAR(out_sum / in_sum, 1.0, 0.02);
  auto dx = dropout_backward(mask, Tensor<double>(x.shape(), 1.0));
  EXPECT_EQ(dx, mask);
}

TEST(SoftmaxXent, UniformLogitsGiveLn3) {
  auto logits = Tensor<double>::matrix(4, 3, 0.7);
  std::vector<Class> labels = {Class::kA, Class::kB, Class::kNeither, Class::kA};
  auto r = softmax_xent(logits, std::span<const Class>(labels));
  EXPECT_NEAR(r.loss, std::log(3.0), 1e-15);
}

TEST(SoftmaxXent, ConfidentTrueClass) {
  auto logits = Tensor<double>::matrix({{50, 0, 0}, {0, 0, 50}});
  std::vector<Class> labels = {Class::kA, Class::kNeither};
  EXPECT_LT(softmax_xent(logits, std::span<const Class>(labels)).loss, 1e-10);
  auto huge = Tensor<double>::matrix({{1000, -1000, 0}});
  std::vector<Class> one = {Class::kB};
  auto r = softmax_xent(huge, std::span<const Class>(one));
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 2000.0, 1e-9);
}

TEST(SoftmaxXent, GradientAndSimplex) {
  Rng rng(4);
  auto logits = random_matrix(3, 3, rng, -2, 2);
  std::vector<Class> labels;
  for (int i = 0; i < 3; ++i) labels.push_back(static_cast<Class>(uniform_index(rng, 3)));
  auto r = softmax_xent(logits, std::span<const Class>(labels));
  auto p = softmax_rows(logits);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_GT(p(i, c), 0.0);
      s += p(i, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const double eps = 1e-6;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    auto lp = logits, lm = logits;
    lp[i] += eps;
    lm[i] -= eps;
    const double num = (softmax_xent(lp, std::span<const Class>(labels)).loss -
                        softmax_xent(lm, std::span<const Class>(labels)).loss) /
                       (2 * eps);
    EXPECT_LT(relative_error(r.dlogits[i], num, 1e-6), 1e-7);
  }
}

TEST(SoftmaxXent, LabelCountMismatch) {
  std::vector<Class> labels = {Class::kA};
  EXPECT_THROW(softmax_xent(Tensor<double>::matrix(2, 3), std::span<const Class>(labels)), ShapeError);
}

TEST(L2Penalty, ClosedFormAndFilter) {
  ParamStore<double> s;
  s.add("fc.W", {1, 1}).value[0] = 3.0;
  s.add("fc.b", {1}).value[0] = 5.0;
  s.add("gate.gate_b", {1}).value[0] = 5.0;
  s.add("bn.gamma", {1}).value[0] = 5.0;
  EXPECT_EQ(l2_penalty(s, 0.0), 0.0);
  EXPECT_EQ(s.grad("fc.W")[0], 0.0);
  EXPECT_NEAR(l2_penalty(s, 0.1), 0.9, 1e-15);
  EXPECT_NEAR(s.grad("fc.W")[0], 0.6, 1e-15);
  EXPECT_EQ(s.grad("fc.b")[0], 0.0);
  EXPECT_EQ(s.grad("gate.gate_b")[0], 0.0);
  EXPECT_EQ(s.grad("bn.gamma")[0], 0.0);
}

TEST(L2Penalty, GradientMatchesCentralDifferences) {
  Rng rng(8);
  ParamStore<double> s;
  s.add("a.W", {3, 2}).value = random_matrix(3, 2, rng);
  s.add("a.b", {2});
  LossClosure<double> closure = [](ParamStore<double>& st, bool with_grad) {
    if (with_grad) return l2_penalty(st, 0.25);
    ParamStore<double> copy = st;
    return l2_penalty(copy, 0.25);
  };
  EXPECT_LT(grad_check(closure, s).max_rel_error, 1e-7);
}

TEST(Adam, ZeroGradientKeepsParameters) {
  ParamStore<double> s;
  s.add("x.W", {2}).value = Tensor<double>({2}, {0.5, -1.5});
  const auto before = s.value("x.W");
  Hyper h;
  adam_step(s, h, 0.1);
  adam_step(s, h, 0.1);
  EXPECT_EQ(s.value("x.W"), before);
  EXPECT_EQ(s.step(), 2u);
}

TEST(Adam, ZeroLearningRateKeepsParameters) {
  ParamStore<double> s;
  s.add("x.W", {1}).value[0] = 0.5;
  Hyper h;
  for (int i = 0; i < 2; ++i) {
    s.grad("x.W")[0] = 0.3;
    adam_step(s, h, 0.0);
  }
  EXPECT_EQ(s.value("x.W")[0], 0.5);
}

TEST(Adam, HandExecutedSteps) {
  ParamStore<double> s;
  s.add("x.W", {1}).value[0] = 0.5;
  s.add("frozen", {1}, false).value[0] = 7.0;
  Hyper h;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double theta = 0.5, m = 0, v = 0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? 0.2 : -0.05;
    s.grad("x.W")[0] = g;
    s.grad("frozen")[0] = 1.0;
    adam_step(s, h, lr);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    theta -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    EXPECT_NEAR(s.value("x.W")[0], theta, 1e-15);
    EXPECT_EQ(s.grad("x.W")[0], 0.0);
  }
  // First step moves by lr * g / (|g| + eps') regardless of the scale of g.
  EXPECT_NEAR(0.5 - (0.5 - 0.01 * 0.2 / (0.2 + eps * std::sqrt(1 - b2))), 0.01, 1e-9);
  EXPECT_EQ(s.value("frozen")[0], 7.0);
}

TEST(ParamStore, DuplicateAndMissingNames) {
  ParamStore<double> s;
  s.add("a", {2});
  EXPECT_THROW(s.add("a", {2}), std::invalid_argument);
  EXPECT_THROW(s.at("missing"), std::out_of_range);
  EXPECT_TRUE(is_weight_matrix("head.fc.W"));
  EXPECT_FALSE(is_weight_matrix("head.fc.b"));
  EXPECT_FALSE(is_weight_matrix("rgcn.0.self_loop.gate_w"));
}

// Toy linear -> relu -> linear -> xent model as a grad_check closure.
struct ToyModel {
  Tensor<double> x;
  std::vector<Class> labels;
  bool flip_sign = false;

  double operator()(ParamStore<double>& s, bool with_grad) const {
    auto z = linear(x, s.value("l1.W"), s.value("l1.b"));
    auto a = relu(z);
    auto logits = linear(a, s.value("l2.W"), s.value("l2.b"));
    auto r = softmax_xent(logits, std::span<const Class>(labels));
    if (with_grad) {
      auto g2 = linear_backward(a, s.value("l2.W"), r.dlogits);
      auto g1 = linear_backward(x, s.value("l1.W"), relu_backward(z, g2.dx));
      s.grad("l2.W") += g2.dW;
      s.grad("l2.b") += g2.db;
      s.grad("l1.W") += g1.dW;
      s.grad("l1.b") += g1.db;
      if (flip_sign)
        for (auto& g : s.grad("l2.W").values()) g = -g;
    }
    return r.loss;
  }
};

ParamStore<double> toy_store(Rng& rng) {
  ParamStore<double> s;
  s.add("l1.W", {4, 5}).value = random_matrix(4, 5, rng);
  s.add("l1.b", {5}).value.fill(0.1);
  s.add("l2.W", {5, 3}).value = random_matrix(5, 3, rng);
  s.add("l2.b", {3});
  s.add("unused.W", {2});
  return s;
}

TEST(GradCheck, ToyModelPasses) {
  Rng rng(21);
  ToyModel m{random_matrix(6, 4, rng), {Class::kA, Class::kB, Class::kNeither, Class::kA, Class::kB, Class::kB}};
  auto s = toy_store(rng);
  auto r = grad_check(LossClosure<double>(m), s);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.coordinates, 20u + 5 + 15 + 3 + 2);
}

TEST(GradCheck, IndependentParameterHasZeroGradients) {
  Rng rng(21);
  ToyModel m{random_matrix(3, 4, rng), {Class::kA, Class::kB, Class::kNeither}};
  auto s = toy_store(rng);
  GradCheckOptions only_unused;
  only_unused.include = [](std::string_view n) { return n == "unused.W"; };
  auto r = grad_check(LossClosure<double>(m), s, only_unused);
  EXPECT_EQ(r.coordinates, 2u);
  EXPECT_EQ(r.analytic, 0.0);
  EXPECT_EQ(r.numeric, 0.0);
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(GradCheck, DetectsSignFlip) {
  Rng rng(21);
  ToyModel m{random_matrix(6, 4, rng), {Class::kA, Class::kB, Class::kNeither, Class::kA, Class::kB, Class::kB}};
  m.flip_sign = true;
  auto s = toy_store(rng);
  auto r = grad_check(LossClosure<double>(m), s);
  EXPECT_NEAR(r.max_rel_error, 2.0, 1e-6);
  EXPECT_EQ(r.worst_param, "l2.W");
}

TEST(GradCheck, NonFiniteLoss) {
  ParamStore<double> s;
  s.add("p.W", {1});
  LossClosure<double> bad = [](ParamStore<double>&, bool) { return std::numeric_limits<double>::quiet_NaN(); };
  EXPECT_THROW(grad_check(bad, s), NonFiniteLossError);
}

TEST(GradCheck, RelativeErrorDefinition) {
  EXPECT_EQ(relative_error(1.0, -1.0, 1e-6), 2.0);
  EXPECT_EQ(relative_error(0.0, 0.0, 1e-6), 0.0);
  EXPECT_NEAR(relative_error(1e-9, 0.0, 1e-6), 1e-3, 1e-18);
  EXPECT_NEAR(relative_error(2.0, 1.0, 1e-6), 0.5, 0.0);
}

}  // namespace
}  // namespace rgcoref
