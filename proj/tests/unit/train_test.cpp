#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "../support/toy.hpp"
#include "mtsql/train/evaluate.hpp"
#include "mtsql/train/trainer.hpp"

using namespace mtsql;
using namespace mtsql::train;

namespace {

const eval::Corpus& toy_corpus() {
  static const eval::Corpus c =
      eval::load_corpus(mtsql::testing::toy_path("tables.json"), mtsql::testing::toy_path("content"));
  return c;
}

const std::vector<PreparedExample>& toy_examples() {
  static const auto ex =
      prepare_examples(eval::load_examples(mtsql::testing::toy_path("train.json")), toy_corpus().schemas);
  return ex;
}

std::vector<PreparedExample> first(std::size_t n) {
  return {toy_examples().begin(), toy_examples().begin() + static_cast<long>(n)};
}

TrainConfig tiny() {
  TrainConfig c;
  c.encoder.layers = 1;
  c.encoder.heads = 2;
  c.encoder.d_emb = 16;
  c.sld_hidden = 16;
  c.ote.layers = 1;
  c.ote.heads = 2;
  c.decoder.beam = 20;
  c.decoder.rank = 4;
  c.batch_size = 5;
  c.learning_rate = 3e-3;
  return c;
}

Model tiny_model(TrainConfig c = tiny()) { return make_model(c, build_vocabulary(toy_examples())); }

const PreparedExample& with_all_losses() {
  for (const auto& ex : toy_examples())
    if (!ex.input.candidates.empty() && !ex.triples.empty() && ex.gold->from.tables.size() > 1) return ex;
  throw std::runtime_error("no toy example with links, triples and a join");
}

Losses losses(const Model& m, const PreparedExample& ex, tensor::Graph& g, tensor::Binding& b) {
  (void)g;
  nn::Context ctx(b, false, 0);
  return forward_losses(ctx, m, ex, LinkSource::Predicted);
}

}  // namespace

TEST(TrainConfig, DefaultsFollowTheBestGridRow) {
  TrainConfig c;
  EXPECT_EQ(c.lambda, 0.05);
  EXPECT_EQ(c.mu, 0.30);
  EXPECT_EQ(c.batch_size, 30u);
  EXPECT_EQ(c.encoder.dropout, 0.2);
  EXPECT_EQ(c.tree_dropout, 0.5);
  EXPECT_EQ(c.patience, 10u);
  EXPECT_EQ(c.gold_link_epochs, 5u);
  EXPECT_NO_THROW(c.validate());
}

TEST(TrainConfig, ParsesKeyValueWithComments) {
  auto c = parse_config("# comment\n lambda = 0.5  # trailing\n\nencoder.layers=3\ndecoder.rule2 = false\nlink_weighting = uniform\n");
  EXPECT_EQ(c.lambda, 0.5);
  EXPECT_EQ(c.encoder.layers, 3u);
  EXPECT_FALSE(c.decoder.rule2);
  EXPECT_EQ(c.link_weighting, linking::LinkWeighting::Uniform);
  EXPECT_EQ(c.mu, 0.30);
}

TEST(TrainConfig, EveryKeyRoundTrips) {
  TrainConfig c = tiny();
  c.lambda = 0.1 + 1e-12;
  c.seed = 123456789012345ULL;
  EXPECT_EQ(parse_config(format_config(c)), c);
  for (const auto& k : config_keys()) EXPECT_EQ(get_config_value(parse_config(format_config(c)), k), get_config_value(c, k));
}

TEST(TrainConfig, UnknownKeyListsValidKeys) {
  TrainConfig c;
  try {
    apply_override(c, "lamda=0.1");
    FAIL() << "no error";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("lamda"), std::string::npos);
    for (const auto& k : config_keys()) EXPECT_NE(msg.find(k), std::string::npos) << k;
  }
}

TEST(TrainConfig, RejectsBadValues) {
  EXPECT_THROW(parse_config("lambda = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("batch_size = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("mu = abc\n"), ConfigError);
  EXPECT_THROW(parse_config("use_sld = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config("just words\n"), ConfigError);
  EXPECT_THROW(parse_config("encoder.heads = 3\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/cfg.conf"), ConfigError);
  TrainConfig c;
  apply_override(c, "mu= 0.7");
  EXPECT_EQ(c.mu, 0.7);
}

TEST(Prepare, ToyCorpusFullyPrepared) {
  PrepareReport r;
  auto ex = prepare_examples(eval::load_examples(mtsql::testing::toy_path("train.json")), toy_corpus().schemas, &r);
  EXPECT_EQ(r.input, 50u);
  EXPECT_EQ(r.kept, 50u);
  for (const auto& e : ex) {
    EXPECT_EQ(e.link_labels.size(), e.input.candidates.size());
    EXPECT_EQ(e.input.base.size(), e.input.seq.size());
    EXPECT_EQ(e.input.words.size(), e.input.cased.size());
  }
  auto j = to_json(ex[0]);
  for (const char* k : {"id", "sequence", "relations", "links", "triples", "tree"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["relations"].size(), ex[0].input.seq.size() * ex[0].input.seq.size());
}

TEST(Prepare, SkipsAndCountsBadExamples) {
  std::vector<eval::Example> in = {{"nowhere", "q", "SELECT 1"},
                                   {"employee_hire", "how many", "SELECT count(*) FROM no_such_table"},
                                   {"employee_hire", "how many employees", "SELECT count(*) FROM employee"}};
  PrepareReport r;
  auto out = prepare_examples(in, toy_corpus().schemas, &r);
  EXPECT_EQ(r.unknown_db, 1u);
  EXPECT_EQ(r.unparsable, 1u);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].id, "employee_hire#2");
}

TEST(TotalLoss, DegenerateAndLinearInWeights) {
  tensor::Graph g;
  Var d = g.constant(tensor::Tensor({1, 1}, 2.5));
  Var a = g.constant(tensor::Tensor({1, 1}, 7.25));
  Var b = g.constant(tensor::Tensor({1, 1}, 3.125));
  EXPECT_EQ(total_loss(d, a, b, 0.0, 0.0).value()[0], 2.5);
  for (double lambda : {0.05, 0.3, 1.7}) {
    const double l1 = total_loss(d, a, b, lambda, 0.3).value()[0];
    const double l2 = total_loss(d, a, b, 2 * lambda, 0.3).value()[0];
    EXPECT_NEAR(l2 - l1, lambda * 7.25, 1e-12);
    const double m1 = total_loss(d, a, b, 0.05, lambda).value()[0];
    const double m2 = total_loss(d, a, b, 0.05, 2 * lambda).value()[0];
    EXPECT_NEAR(m2 - m1, lambda * 3.125, 1e-12);
  }
}

TEST(Forward, LossesFiniteAndCombined) {
  const Model m = tiny_model();
  const auto& ex = with_all_losses();
  tensor::Graph g;
  tensor::Binding b(g, m.store);
  auto l = losses(m, ex, g, b);
  for (const Var* v : {&l.total, &l.delta, &l.alpha, &l.beta}) {
    EXPECT_TRUE(std::isfinite(v->value()[0]));
    EXPECT_GT(v->value()[0], 0.0);
  }
  EXPECT_NEAR(l.total.value()[0], l.delta.value()[0] + 0.05 * l.alpha.value()[0] + 0.30 * l.beta.value()[0], 1e-9);
}

TEST(Forward, EveryLossReachesTheSharedEncoder) {
  const Model m = tiny_model();
  for (auto links : {LinkSource::Gold, LinkSource::Predicted}) {
    auto n = encoder_gradient_norms(m, with_all_losses(), links);
    EXPECT_GT(n.delta, 0.0);
    EXPECT_GT(n.alpha, 0.0);
    EXPECT_GT(n.beta, 0.0);
  }
}

TEST(Forward, ZeroWeightsGiveGenerationOnlyGradients) {
  TrainConfig c = tiny();
  c.lambda = 0.0;
  c.mu = 0.0;
  const Model m = tiny_model(c);
  tensor::Graph g;
  tensor::Binding b(g, m.store);
  auto l = losses(m, with_all_losses(), g, b);
  EXPECT_EQ(l.total.value()[0], l.delta.value()[0]);
  auto gt = b.gradients(l.total);
  auto gd = b.gradients(l.delta);
  for (std::size_t i = 0; i < gt.size(); ++i) EXPECT_EQ(gt[i], gd[i]) << m.store.name(i);
}

TEST(Forward, AblationsDropTheirLosses) {
  TrainConfig c = tiny();
  c.use_sld = false;
  c.use_ote = false;
  const Model m = tiny_model(c);
  tensor::Graph g;
  tensor::Binding b(g, m.store);
  auto l = losses(m, with_all_losses(), g, b);
  EXPECT_EQ(l.alpha.value()[0], 0.0);
  EXPECT_EQ(l.beta.value()[0], 0.0);
  EXPECT_EQ(l.total.value()[0], l.delta.value()[0]);
  const auto p = predict(m, with_all_losses().input);
  EXPECT_TRUE(p.triples.empty());
}

TEST(Trainer, IdenticalSeedsGiveIdenticalParameters) {
  auto data = first(10);
  Model a = tiny_model(), b = tiny_model();
  Trainer ta(a), tb(b);
  for (int e = 0; e < 2; ++e) {
    auto ra = ta.train_epoch(data);
    auto rb = tb.train_epoch(data);
    EXPECT_EQ(ra.loss, rb.loss);
  }
  EXPECT_TRUE(a.store == b.store);
  EXPECT_EQ(tensor::serialize_checkpoint(a.store), tensor::serialize_checkpoint(b.store));

  TrainConfig other = tiny();
  other.seed = 2;
  Model c = tiny_model(other);
  Trainer tc(c);
  tc.train_epoch(data);
  tc.train_epoch(data);
  EXPECT_FALSE(a.store == c.store);
}

TEST(Trainer, ReportsGoldLinksThenPredicted) {
  TrainConfig c = tiny();
  c.gold_link_epochs = 1;
  Model m = tiny_model(c);
  Trainer t(m);
  auto data = first(5);
  EXPECT_EQ(t.train_epoch(data).links, LinkSource::Gold);
  auto r = t.train_epoch(data);
  EXPECT_EQ(r.links, LinkSource::Predicted);
  EXPECT_GT(r.norms.delta, 0.0);
  EXPECT_GT(r.norms.alpha, 0.0);
  EXPECT_GT(r.norms.beta, 0.0);
  EXPECT_TRUE(std::isfinite(r.loss));
}

TEST(Trainer, LossDecreasesOnTenExamplesOverFiftyEpochs) {
  TrainConfig c = tiny();
  c.epochs = 50;
  Model m = tiny_model(c);
  auto report = train::train(m, first(10), {});
  ASSERT_EQ(report.epochs.size(), 50u);
  const double start = report.epochs.front().loss, end = report.epochs.back().loss;
  EXPECT_LT(end, 0.75 * start) << start << " -> " << end;
}

TEST(Trainer, NonFiniteLossNamesTheExample) {
  Model m = tiny_model();
  for (auto& v : m.store.value(*m.store.find("enc.words")).data()) v = std::numeric_limits<double>::quiet_NaN();
  Trainer t(m);
  auto data = first(3);
  try {
    t.train_epoch(data);
    FAIL() << "no error";
  } catch (const TrainError& e) {
    const std::string msg = e.what();
    bool named = false;
    for (const auto& ex : data) named |= msg.find(ex.id) != std::string::npos;
    EXPECT_TRUE(named) << msg;
    EXPECT_NE(msg.find("non-finite"), std::string::npos) << msg;
  }
}

TEST(Trainer, EarlyStoppingRestoresBestParameters) {
  TrainConfig c = tiny();
  c.epochs = 6;
  c.patience = 2;
  Model m = tiny_model(c);
  auto data = first(5);
  auto report = train::train(m, data, data);
  EXPECT_LE(report.epochs.size(), 6u);
  ASSERT_FALSE(report.epochs.empty());
  EXPECT_EQ(held_out_esm(m, data).esm, report.best_esm);
  auto j = report.to_json();
  EXPECT_EQ(j["epochs"].size(), report.epochs.size());
}

TEST(ModelFile, RoundTripKeepsParametersAndPredictions) {
  TrainConfig c = tiny();
  c.epochs = 2;
  Model m = tiny_model(c);
  train::train(m, first(10), {});
  const auto path = std::filesystem::temp_directory_path() / "mtsql_train_test_model.bin";
  save_model(m, path);
  Model back = load_model(path);
  EXPECT_TRUE(back.store == m.store);
  EXPECT_TRUE(back.vocab == m.vocab);
  EXPECT_EQ(back.config, m.config);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& in = toy_examples()[i * 7].input;
    auto a = predict(m, in), b = predict(back, in);
    EXPECT_EQ(a.sql, b.sql);
    EXPECT_EQ(a.triples, b.triples);
    EXPECT_EQ(a.tree->key, b.tree->key);
  }
  std::filesystem::remove(path);
}

TEST(ModelFile, RejectsWrongVersionAndCorruption) {
  Model m = tiny_model();
  std::string bytes = serialize_model(m);
  std::string wrong = bytes;
  wrong.replace(0, 13, "mtsql-model 9");
  EXPECT_THROW(parse_model(wrong), tensor::CheckpointError);
  EXPECT_THROW(parse_model("garbage"), tensor::CheckpointError);
  EXPECT_THROW(parse_model(bytes.substr(0, bytes.size() / 2)), tensor::CheckpointError);
  std::string bad_header = bytes;
  bad_header[bytes.find('\n', 14) + 1] = '!';
  EXPECT_THROW(parse_model(bad_header), tensor::CheckpointError);
  EXPECT_NO_THROW(parse_model(bytes));
}

TEST(Evaluate, PerLevelCountsSumAndRepeat) {
  const Model m = tiny_model();
  auto data = first(12);
  auto a = evaluate_dataset(m, data, eval::Metric::ExactSetMatch);
  auto b = evaluate_dataset(m, data, eval::Metric::ExactSetMatch);
  EXPECT_EQ(a.report.total(), 12);
  int sum = 0;
  for (int n : a.report.count) sum += n;
  EXPECT_EQ(sum, 12);
  EXPECT_EQ(a.report, b.report);
  auto ex = evaluate_dataset(m, data, eval::Metric::Execution, toy_corpus().databases);
  EXPECT_EQ(ex.report.total(), 12);
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(a.examples[i].hardness, eval::hardness(*data[i].gold));
    // a clause-identical prediction also executes identically
    if (a.examples[i].correct) {
      EXPECT_TRUE(ex.examples[i].correct);
    }
  }
}
