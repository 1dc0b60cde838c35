#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mtsql/encoder/encoder.hpp"
#include "mtsql/linking/text.hpp"

using namespace mtsql;
using namespace mtsql::encoder;
using tensor::Tensor;

namespace {

struct Block {
  tensor::ParameterStore store;
  EncoderConfig config;
  EncoderParams params;
  Block(std::size_t d, std::size_t heads, std::uint64_t seed, std::size_t layers = 1) {
    config.layers = layers;
    config.heads = heads;
    config.d_emb = d;
    config.dropout = 0.0;
    tensor::Rng rng(seed);
    params = make_encoder(store, config, 5, rng);
    // non-zero relation embeddings and norm parameters so every term matters
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (store.name(i).find("rel_") != std::string::npos || store.name(i).find("norm") != std::string::npos ||
          store.name(i).ends_with(".b")) {
        for (std::size_t k = 0; k < store.value(i).size(); ++k) store.value(i)[k] += rng.uniform(-0.5, 0.5);
      }
    }
  }
  const RelationLayer& layer() const { return params.layers[0]; }
};

Tensor random(std::size_t r, std::size_t c, std::uint64_t seed) {
  tensor::Rng rng(seed);
  Tensor t({r, c});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1, 1);
  return t;
}

schema::RelationMatrix random_relations(std::size_t n, std::uint64_t seed) {
  tensor::Rng rng(seed);
  schema::RelationMatrix r(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) r.set(i, j, static_cast<schema::Relation>(rng.below(schema::kRelationCount)));
  return r;
}

Tensor run(Block& b, const Tensor& x, const schema::RelationMatrix& r, AttentionTrace* trace = nullptr) {
  tensor::Graph g;
  tensor::Binding bind(g, b.store);
  nn::Context ctx(bind, false, 0);
  return relation_aware_attention(ctx, b.layer(), b.config, ctx.constant(x), r, trace).value();
}

double max_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Row-major naive product over raw tensors.
Tensor mm(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()}, 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      for (std::size_t j = 0; j < b.cols(); ++j) out.at(i, j) += a.at(i, k) * b.at(k, j);
  return out;
}

}  // namespace

TEST(RelationAttention, ZeroRelationsReduceToStandardAttention) {
  Block b(8, 2, 21);
  b.store.value(b.layer().rel_k) = Tensor(b.store.value(b.layer().rel_k).shape(), 0.0);
  b.store.value(b.layer().rel_v) = Tensor(b.store.value(b.layer().rel_v).shape(), 0.0);
  auto x = random(5, 8, 22);
  auto out = run(b, x, random_relations(5, 23));
  EXPECT_LT(max_diff(out, run(b, x, random_relations(5, 24))), 1e-12);

  // same block evaluated as plain multi-head attention
  tensor::Graph g;
  tensor::Binding bind(g, b.store);
  nn::Context ctx(bind, false, 0);
  const auto& l = b.layer();
  auto xv = ctx.constant(x);
  auto q = nn::linear(ctx, l.q, xv), k = nn::linear(ctx, l.k, xv), v = nn::linear(ctx, l.v, xv);
  std::vector<tensor::Var> heads;
  for (std::size_t h = 0; h < 2; ++h) {
    auto qh = tensor::slice(q, 1, h * 4, h * 4 + 4), kh = tensor::slice(k, 1, h * 4, h * 4 + 4);
    auto w = tensor::softmax(tensor::scale(tensor::matmul(qh, tensor::transpose(kh)), 0.5));
    heads.push_back(tensor::matmul(w, tensor::slice(v, 1, h * 4, h * 4 + 4)));
  }
  auto h1 = nn::norm(ctx, l.norm1, tensor::add(xv, nn::linear(ctx, l.o, tensor::concat(heads, 1))));
  auto ref = nn::norm(ctx, l.norm2, tensor::add(h1, nn::ffn(ctx, l.ffn, h1, 0.0)));
  EXPECT_LT(max_diff(out, ref.value()), 1e-12);
}

TEST(RelationAttention, DirectEvaluationSingleHead) {
  Block b(4, 1, 31);
  auto x = random(3, 4, 32);
  auto r = random_relations(3, 33);
  AttentionTrace trace;
  run(b, x, r, &trace);
  const auto& l = b.layer();
  const Tensor Q = mm(x, b.store.value(l.q.w)), K = mm(x, b.store.value(l.k.w)), V = mm(x, b.store.value(l.v.w));
  const Tensor& rk = b.store.value(l.rel_k);
  const Tensor& rv = b.store.value(l.rel_v);
  for (std::size_t i = 0; i < 3; ++i) {
    double e[3], a[3], denom = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      const auto lab = static_cast<std::size_t>(r.at(i, j));
      e[j] = 0;
      for (std::size_t c = 0; c < 4; ++c) e[j] += Q.at(i, c) * (K.at(j, c) + rk.at(lab, c));
      e[j] /= 2.0;
      EXPECT_NEAR(trace.scores[0].at(i, j), e[j], 1e-9);
    }
    const double mx = *std::max_element(e, e + 3);
    for (std::size_t j = 0; j < 3; ++j) denom += std::exp(e[j] - mx);
    for (std::size_t j = 0; j < 3; ++j) {
      a[j] = std::exp(e[j] - mx) / denom;
      EXPECT_NEAR(trace.weights[0].at(i, j), a[j], 1e-9);
    }
    for (std::size_t c = 0; c < 4; ++c) {
      double z = 0;
      for (std::size_t j = 0; j < 3; ++j) z += a[j] * (V.at(j, c) + rv.at(static_cast<std::size_t>(r.at(i, j)), c));
      EXPECT_NEAR(trace.values[0].at(i, c), z, 1e-9);
    }
  }
}

TEST(RelationAttention, WeightRowsAreDistributions) {
  Block b(8, 4, 41);
  AttentionTrace trace;
  run(b, random(7, 8, 42), random_relations(7, 43), &trace);
  ASSERT_EQ(trace.weights.size(), 4u);
  for (const auto& w : trace.weights)
    for (std::size_t i = 0; i < 7; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 7; ++j) s += w.at(i, j);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

class Equivariance : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(Equivariance, PermutingPositionsPermutesOutputs) {
  const std::uint64_t seed = GetParam();
  Block b(8, 2, seed);
  const std::size_t n = 6;
  auto x = random(n, 8, seed + 1);
  auto r = random_relations(n, seed + 2);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  tensor::Rng rng(seed + 3);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  Tensor px({n, 8});
  schema::RelationMatrix pr(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 8; ++c) px.at(i, c) = x.at(perm[i], c);
    for (std::size_t j = 0; j < n; ++j) pr.set(i, j, r.at(perm[i], perm[j]));
  }
  auto out = run(b, x, r), pout = run(b, px, pr);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(pout.at(i, c), out.at(perm[i], c), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Seeds, Equivariance, ::testing::Values(51u, 52u, 53u));

TEST(RelationAttention, LabelChangeMovesOnlyItsRow) {
  Block b(8, 2, 61);
  auto x = random(5, 8, 62);
  auto r = random_relations(5, 63);
  auto base = run(b, x, r);
  auto r2 = r;
  r2.set(2, 4, r.at(2, 4) == schema::Relation::QcExact ? schema::Relation::TtNone : schema::Relation::QcExact);
  auto moved = run(b, x, r2);
  for (std::size_t i = 0; i < 5; ++i) {
    double d = 0;
    for (std::size_t c = 0; c < 8; ++c) d = std::max(d, std::abs(moved.at(i, c) - base.at(i, c)));
    if (i == 2) EXPECT_GT(d, 1e-6);
    else EXPECT_EQ(d, 0.0);
  }
}

TEST(RelationAttention, GradientCheckOneLayer) {
  Block b(8, 1, 71);
  auto x = random(6, 8, 72);
  auto r = random_relations(6, 73);
  auto proj = random(6, 8, 74);  // a plain sum of a normed output is constant
  auto err = nn::gradient_check(
      b.store,
      [&](nn::Context& ctx) {
        auto y = relation_aware_attention(ctx, b.layer(), b.config, ctx.constant(x), r);
        return tensor::sum(tensor::mul(y, ctx.constant(proj)));
      },
      1e-5);
  EXPECT_LT(err, 1e-3);
}

TEST(RelationAttention, BadShapesRejected) {
  Block b(8, 2, 81);
  EXPECT_THROW(run(b, random(4, 8, 82), random_relations(5, 83)), tensor::ShapeError);
  schema::RelationMatrix r(4);
  EncoderConfig narrow = b.config;
  narrow.relation_count = 3;
  tensor::Graph g;
  tensor::Binding bind(g, b.store);
  nn::Context ctx(bind, false, 0);
  r.set(0, 1, schema::Relation::QvStem);
  EXPECT_THROW(relation_aware_attention(ctx, b.layer(), narrow, ctx.constant(random(4, 8, 84)), r), std::out_of_range);
}

TEST(EncoderConfig, HeadsMustDivideWidth) {
  EncoderConfig c;
  c.d_emb = 10;
  c.heads = 4;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

namespace {

schema::SchemaGraph one_table() {
  return schema::load_schema(nlohmann::json::parse(R"({
    "db_id": "t", "table_names_original": ["pets"], "table_names": ["pets"],
    "column_names_original": [[-1, "*"], [0, "pet_age"]], "column_names": [[-1, "*"], [0, "pet age"]],
    "column_types": ["text", "number"], "primary_keys": [], "foreign_keys": []})"));
}

}  // namespace

TEST(Embedding, UnknownWordsShareRowZero) {
  Block b(8, 2, 91);
  Vocabulary vocab;
  vocab.add("pets");
  auto s = one_table();
  auto seq = schema::serialize_input({"zebra", "quokka"}, s);
  tensor::Graph g;
  tensor::Binding bind(g, b.store);
  nn::Context ctx(bind, false, 0);
  auto chi = embed_input(ctx, b.params, vocab, seq, s).value();
  ASSERT_EQ(chi.rows(), seq.size());
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(chi.at(seq.question_pos(0), c), chi.at(seq.question_pos(1), c));
}

TEST(Encoder, DeterministicInEvalAndSeededInTraining) {
  Block b(8, 2, 95, 2);
  b.config.dropout = 0.3;
  b.params.config.dropout = 0.3;
  Vocabulary vocab;
  for (auto w : {"how", "old", "pets"}) vocab.add(w);
  auto s = one_table();
  auto seq = schema::serialize_input(linking::tokenize("how old are pets"), s);
  auto r = schema::build_schema_relations(s, seq);
  auto states = [&](bool train, std::uint64_t seed) {
    tensor::Graph g;
    tensor::Binding bind(g, b.store);
    nn::Context ctx(bind, train, seed);
    return encode(ctx, b.params, vocab, seq, s, r).states.value();
  };
  EXPECT_EQ(states(false, 1), states(false, 2));
  EXPECT_EQ(states(true, 1), states(true, 1));
  EXPECT_NE(states(true, 1), states(true, 2));
  EXPECT_NE(states(true, 1), states(false, 1));
}
