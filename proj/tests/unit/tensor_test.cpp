#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "../support/gradient_cases.hpp"
#include "mtsql/tensor/graph.hpp"
#include "mtsql/tensor/params.hpp"

using namespace mtsql::tensor;

TEST(Tensor, MatmulIdentity) {
  Graph g;
  auto x = g.constant(Tensor::matrix({{1, 2, 3}, {4, 5, 6}}));
  auto eye = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  EXPECT_EQ(matmul(eye, x).value(), x.value());
}

TEST(Tensor, SoftmaxOfZerosIsUniform) {
  Graph g;
  auto y = softmax(g.constant(Tensor::matrix({{0, 0}})));
  EXPECT_DOUBLE_EQ(y.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(y.value()[1], 0.5);
}

TEST(Tensor, EmbeddingLookupReturnsRow) {
  Graph g;
  Rng rng(4);
  auto table = g.constant(mtsql::testing::random_tensor(5, 3, rng));
  std::size_t idx[] = {3};
  auto row = embedding_lookup(table, idx);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(row.value().at(0, c), table.value().at(3, c));
}

TEST(Tensor, ShapeMismatchNamesOpAndShapes) {
  Graph g;
  auto a = g.constant(Tensor({2, 3}));
  auto b = g.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
  }
}

TEST(Backward, SquareAtThree) {
  Graph g;
  auto x = g.leaf(Tensor::scalar(3.0));
  auto loss = mul(x, x);
  NodeId ids[] = {x.id()};
  EXPECT_DOUBLE_EQ(g.backward(loss, ids).at(x.id()).item(), 6.0);
}

TEST(Backward, SoftmaxCrossEntropyIsProbMinusOneHot) {
  Graph g;
  auto logits = g.leaf(Tensor::matrix({{0.3, -1.2, 2.0, 0.1}}));
  std::size_t target[] = {2};
  auto loss = cross_entropy(logits, target);
  NodeId ids[] = {logits.id()};
  auto grad = g.backward(loss, ids).at(logits.id());
  Graph h;
  auto p = softmax(h.constant(logits.value())).value();
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(grad[j], p[j] - (j == 2 ? 1.0 : 0.0), 1e-14);
}

TEST(Backward, NonScalarLossRejected) {
  Graph g;
  auto x = g.leaf(Tensor({2, 2}, 1.0));
  NodeId ids[] = {x.id()};
  EXPECT_THROW(g.backward(x, ids), GradientError);
}

TEST(Backward, UnreachableParamGetsZero) {
  Graph g;
  auto x = g.leaf(Tensor::scalar(2.0));
  auto y = g.leaf(Tensor({2, 3}, 1.0));
  NodeId ids[] = {x.id(), y.id()};
  auto grads = g.backward(scale(x, 4.0), ids);
  EXPECT_EQ(grads.at(y.id()), Tensor({2, 3}, 0.0));
}

TEST(Backward, MatmulChainMatchesFiniteDifferences) {
  Rng rng(11);
  auto err = finite_difference_check(
      [](Graph&, std::span<const Var> p) { return sum(tanh(matmul(matmul(p[0], p[1]), p[2]))); },
      {mtsql::testing::random_tensor(3, 4, rng), mtsql::testing::random_tensor(4, 5, rng),
       mtsql::testing::random_tensor(5, 2, rng)},
      1e-5);
  EXPECT_LT(err, 1e-4);
}

TEST(FiniteDifference, QuadraticIsExact) {
  auto err = finite_difference_check(
      [](Graph&, std::span<const Var> p) { return sum(mul(p[0], p[0])); },
      {Tensor::matrix({{0.5, -2.0, 3.0}})}, 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(FiniteDifference, ZeroEpsRejected) {
  EXPECT_THROW(finite_difference_check([](Graph&, std::span<const Var> p) { return sum(p[0]); },
                                       {Tensor::scalar(1.0)}, 0.0),
               std::invalid_argument);
}

class EveryOp : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(EveryOp, AgreesWithCentralDifferences) {
  for (auto& c : mtsql::testing::gradient_cases(GetParam())) {
    EXPECT_LT(finite_difference_check(c.build, c.params, 1e-5), 1e-3) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, EveryOp, ::testing::Values(1u, 2u, 3u, 4u, 5u));

TEST(Invariants, SoftmaxRowsAreDistributions) {
  Rng rng(7);
  Graph g;
  auto y = softmax(g.constant(mtsql::testing::random_tensor(6, 8, rng, -30.0, 30.0))).value();
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_GE(y.at(r, c), 0.0);
      s += y.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Invariants, LayerNormStandardizes) {
  Rng rng(8);
  Graph g;
  auto y = layer_norm(g.constant(mtsql::testing::random_tensor(5, 16, rng, -10.0, 10.0))).value();
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 16; ++c) mean += y.at(r, c) / 16;
    for (std::size_t c = 0; c < 16; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean) / 16;
    EXPECT_LT(std::abs(mean), 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(Invariants, DropoutKeepOneIsIdentity) {
  Rng rng(9);
  Graph g;
  g.training = true;
  auto x = g.constant(mtsql::testing::random_tensor(4, 4, rng));
  EXPECT_EQ(dropout(x, 1.0, 123).value(), x.value());
}

TEST(Invariants, DropoutIsSeedDeterministic) {
  Rng rng(10);
  auto t = mtsql::testing::random_tensor(6, 6, rng);
  Graph a, b;
  a.training = b.training = true;
  EXPECT_EQ(dropout(a.constant(t), 0.5, 77).value(), dropout(b.constant(t), 0.5, 77).value());
  EXPECT_NE(dropout(a.constant(t), 0.5, 77).value(), dropout(a.constant(t), 0.5, 78).value());
}

TEST(Invariants, DropoutInactiveOutsideTraining) {
  Graph g;
  auto x = g.constant(Tensor({3, 3}, 2.0));
  EXPECT_EQ(dropout(x, 0.1, 5).value(), x.value());
}

TEST(Apply, DispatchesByKind) {
  Graph g;
  auto x = g.constant(Tensor::matrix({{1, -2}, {3, 4}}));
  Var in[] = {x};
  EXPECT_EQ(apply(OpKind::Relu, in).value(), relu(x).value());
  OpAttrs attrs;
  attrs.scalar = 0.5;
  EXPECT_EQ(apply(OpKind::Scale, in, attrs).value(), scale(x, 0.5).value());
  attrs.axis = 1;
  attrs.begin = 1;
  attrs.end = 2;
  EXPECT_EQ(apply(OpKind::Slice, in, attrs).value(), Tensor::matrix({{-2}, {4}}));
}

TEST(Adam, HandEvaluatedFirstStep) {
  ParameterStore store;
  store.add("p", Tensor::scalar(1.0));
  OptimizerState state;
  Tensor g[] = {Tensor::scalar(1.0)};
  adam_update(store, g, state);
  // m̂ = 1, v̂ = 1, step = lr / (1 + 1e-8)
  EXPECT_NEAR(store.value(0).item(), 1.0 - 1e-3 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, ZeroGradientLeavesParamsAndDecaysMoments) {
  ParameterStore store;
  store.add("p", Tensor::matrix({{0.5, -0.25}}));
  OptimizerState state;
  Tensor g1[] = {Tensor::matrix({{1.0, 2.0}})};
  adam_update(store, g1, state);
  const Tensor before = store.value(0);
  const Tensor m = state.first_moment[0], v = state.second_moment[0];
  Tensor g0[] = {Tensor({1, 2}, 0.0)};
  OptimizerState fresh;
  ParameterStore untouched = store;
  adam_update(untouched, g0, fresh);
  EXPECT_EQ(untouched.value(0), before);
  adam_update(store, g0, state);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_DOUBLE_EQ(state.first_moment[0][i], 0.9 * m[i]);
    EXPECT_DOUBLE_EQ(state.second_moment[0][i], 0.999 * v[i]);
  }
  EXPECT_EQ(state.step, 2);
}

TEST(Adam, Deterministic) {
  auto run = [] {
    ParameterStore s;
    s.add("a", Tensor::matrix({{0.1, 0.2}, {0.3, 0.4}}));
    OptimizerState st;
    Tensor g[] = {Tensor::matrix({{0.5, -0.5}, {1.5, 0.0}})};
    for (int i = 0; i < 3; ++i) adam_update(s, g, st);
    return s;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, MissingGradientRejected) {
  Tensor params[] = {Tensor::scalar(1.0), Tensor::scalar(2.0)};
  std::optional<Tensor> grads[] = {Tensor::scalar(1.0), std::nullopt};
  OptimizerState state;
  EXPECT_THROW(adam_update(params, grads, state), OptimizerError);
}

TEST(Checkpoint, BitExactRoundTrip) {
  ParameterStore store;
  Rng rng(12);
  store.add("encoder.w", mtsql::testing::random_tensor(3, 7, rng));
  store.add("bias", Tensor::matrix({{-0.0, 1e-300, std::nextafter(1.0, 2.0)}}));
  auto path = std::filesystem::temp_directory_path() / "mtsql_ckpt_test.bin";
  save_checkpoint(store, path);
  auto back = load_checkpoint(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.name(0), "encoder.w");
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(store));
  EXPECT_TRUE(std::signbit(back.value(1)[0]));
}

TEST(Checkpoint, VersionMismatchRejected) {
  ParameterStore store;
  store.add("x", Tensor::scalar(1.0));
  auto bytes = serialize_checkpoint(store);
  bytes.replace(0, bytes.find('\n'), "mtsql-checkpoint 99");
  EXPECT_THROW(parse_checkpoint(bytes), CheckpointError);
}

TEST(Checkpoint, TruncatedPayloadRejected) {
  ParameterStore store;
  store.add("x", Tensor({2, 2}, 1.0));
  auto bytes = serialize_checkpoint(store);
  bytes.pop_back();
  EXPECT_THROW(parse_checkpoint(bytes), CheckpointError);
}
