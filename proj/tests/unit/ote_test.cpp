#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "../support/toy.hpp"
#include "mtsql/linking/text.hpp"
#include "mtsql/ote/ote.hpp"

using namespace mtsql;
using namespace mtsql::ote;
using tensor::Tensor;

namespace {

const schema::SchemaGraph& db(const std::string& id) { return mtsql::testing::toy_schemas().at(id); }

struct Parsed {
  const schema::SchemaGraph* s;
  schema::InputSequence seq;
  TripleSet triples;
};

Parsed triples_of(const std::string& db_id, const std::string& sql) {
  const auto& s = db(db_id);
  auto seq = schema::serialize_input({"q"}, s);
  return {&s, seq, gold_triples(*sql::parse_sql(sql, s), s, seq)};
}

OperatorTriple tc(const Parsed& p, const std::string& table, const std::string& column, Relationship r) {
  const int t = *p.s->find_table(table);
  const std::size_t tp = p.seq.table_pos[t];
  const std::size_t cp = column.empty() ? tp : p.seq.column_pos[*p.s->find_column(t, column)];
  return {tp, tp, cp, cp, r};
}

bool contains(const TripleSet& ts, const OperatorTriple& t) { return std::find(ts.begin(), ts.end(), t) != ts.end(); }

std::size_t count(const TripleSet& ts, Relationship r) {
  return std::count_if(ts.begin(), ts.end(), [&](const auto& t) { return t.r == r; });
}

}  // namespace

TEST(GoldTriples, SingleSelect) {
  auto p = triples_of("employee_hire", "SELECT name FROM employee");
  EXPECT_EQ(p.triples, (TripleSet{tc(p, "employee", "name", Relationship::SelectTc)}));
}

TEST(GoldTriples, JoinConditionGivesColumnPair) {
  auto p = triples_of("car_1",
                      "SELECT T1.FullName FROM car_makers AS T1 JOIN model_list AS T2 ON T1.Id = T2.Maker");
  const auto& s = *p.s;
  const int makers = *s.find_table("car_makers"), models = *s.find_table("model_list");
  const std::size_t id = p.seq.column_pos[*s.find_column(makers, "id")];
  const std::size_t maker = p.seq.column_pos[*s.find_column(models, "maker")];
  EXPECT_TRUE(contains(p.triples, {id, id, maker, maker, Relationship::JoinOnCc}));
  EXPECT_TRUE(contains(p.triples, {p.seq.table_pos[makers], p.seq.table_pos[makers], p.seq.table_pos[models],
                                   p.seq.table_pos[models], Relationship::JoinOnTc}));
  EXPECT_EQ(count(p.triples, Relationship::WhereTc), 0u);
}

TEST(GoldTriples, ClauseRelationships) {
  auto p = triples_of("employee_hire",
                      "SELECT city, count(*) FROM employee WHERE age > 30 GROUP BY city HAVING avg(age) > 35 "
                      "ORDER BY count(*) DESC");
  EXPECT_TRUE(contains(p.triples, tc(p, "employee", "city", Relationship::SelectTc)));
  EXPECT_TRUE(contains(p.triples, tc(p, "employee", "", Relationship::SelectTc)));
  EXPECT_TRUE(contains(p.triples, tc(p, "employee", "age", Relationship::WhereTc)));
  EXPECT_TRUE(contains(p.triples, tc(p, "employee", "city", Relationship::GroupByTc)));
  EXPECT_TRUE(contains(p.triples, tc(p, "employee", "", Relationship::OrderByTc)));
  // WHERE and HAVING on age collapse into one WHERE_TC triple
  EXPECT_EQ(count(p.triples, Relationship::WhereTc), 1u);
  EXPECT_EQ(p.triples.size(), 5u);
}

TEST(GoldTriples, NestedQueriesMerge) {
  auto p = triples_of("employee_hire",
                      "SELECT name FROM employee WHERE employee_id NOT IN (SELECT employee_id FROM hiring)");
  EXPECT_TRUE(contains(p.triples, tc(p, "employee", "employee_id", Relationship::WhereTc)));
  EXPECT_TRUE(contains(p.triples, tc(p, "hiring", "employee_id", Relationship::SelectTc)));
}

TEST(GoldTriples, StarWithSeveralTablesIsSkipped) {
  auto p = triples_of("employee_hire",
                      "SELECT count(*) FROM employee AS T1 JOIN hiring AS T2 ON T1.employee_id = T2.employee_id");
  EXPECT_EQ(count(p.triples, Relationship::SelectTc), 0u);
}

TEST(GoldTriples, UnknownNodeRejected) {
  const auto& s = db("employee_hire");
  auto seq = schema::serialize_input({"q"}, db("car_1"));
  seq.column_pos.resize(2);
  EXPECT_THROW(gold_triples(*sql::parse_sql("SELECT name FROM shop", s), s, seq), OteError);
}

TEST(GoldTriples, CorpusInvariants) {
  std::size_t most = 0;
  for (const auto& pair : mtsql::testing::toy_pairs()) {
    const auto& s = db(pair.db_id);
    auto seq = schema::serialize_input(linking::tokenize(pair.question), s);
    auto q = sql::parse_sql(pair.query, s);
    auto ts = gold_triples(*q, s, seq);
    EXPECT_EQ(ts, gold_triples(*q, s, seq));
    EXPECT_TRUE(std::is_sorted(ts.begin(), ts.end()));
    EXPECT_EQ(std::adjacent_find(ts.begin(), ts.end()), ts.end());
    std::vector<int> tables, columns;
    sql::collect_schema_refs(*q, tables, columns);
    auto nodes = triple_nodes(ts, seq);
    for (int t : nodes.tables) EXPECT_NE(std::find(tables.begin(), tables.end(), t), tables.end()) << pair.query;
    for (int c : nodes.columns) EXPECT_NE(std::find(columns.begin(), columns.end(), c), columns.end()) << pair.query;
    for (const auto& t : ts) {
      EXPECT_NE(t.r, Relationship::None);
      const bool cc = t.r == Relationship::JoinOnCc;
      EXPECT_EQ(seq.nodes[t.s_start].kind, cc ? schema::NodeKind::Column : schema::NodeKind::Table);
    }
    most = std::max(most, ts.size());
  }
  EXPECT_LE(most, OteConfig{}.slots);
}

TEST(Relationship, NamesRoundTrip) {
  for (std::size_t i = 0; i < kRelationshipCount; ++i) {
    auto r = static_cast<Relationship>(i);
    EXPECT_EQ(parse_relationship(relationship_name(r)), r);
  }
  EXPECT_EQ(relationship_name(Relationship::OrderByTc), "ORDERBY_TC");
  EXPECT_THROW(parse_relationship("HAVING_TC"), OteError);
}

TEST(Hungarian, TwoByTwo) {
  auto a = hungarian_match({{1, 2}, {2, 1}});
  EXPECT_EQ(a.assignment, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(a.total, 2.0);
}

TEST(Hungarian, ZeroDiagonal) {
  auto a = hungarian_match({{0, 3, 4}, {1, 0, 9}, {5, 2, 0}});
  EXPECT_EQ(a.assignment, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(a.total, 0.0);
}

TEST(Hungarian, SingleEntryAndRectangular) {
  EXPECT_EQ(hungarian_match({{7.5}}).assignment, (std::vector<std::size_t>{0}));
  auto a = hungarian_match({{5, 1, 9}});
  EXPECT_EQ(a.assignment, (std::vector<std::size_t>{1}));
  EXPECT_TRUE(hungarian_match({}).assignment.empty());
}

TEST(Hungarian, TooManyRowsAsksForLargerZ) {
  try {
    hungarian_match({{1}, {2}});
    FAIL();
  } catch (const OteError& e) {
    EXPECT_NE(std::string(e.what()).find("raise"), std::string::npos);
  }
  EXPECT_THROW(hungarian_match({{1, std::nan("")}}), std::invalid_argument);
}

namespace {

double brute_force(const std::vector<std::vector<double>>& c) {
  const std::size_t m = c.size(), z = c[0].size();
  std::vector<std::size_t> cols(z);
  std::iota(cols.begin(), cols.end(), 0);
  double best = INFINITY;
  do {
    double t = 0;
    for (std::size_t i = 0; i < m; ++i) t += c[i][cols[i]];
    best = std::min(best, t);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

}  // namespace

TEST(Hungarian, MatchesExhaustiveSearch) {
  tensor::Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t z = 1 + rng.below(6), m = 1 + rng.below(z);
    std::vector<std::vector<double>> c(m, std::vector<double>(z));
    // quarter-integer costs keep every sum exact
    for (auto& row : c)
      for (auto& x : row) x = static_cast<double>(rng.below(41)) / 4.0;
    auto a = hungarian_match(c);
    EXPECT_EQ(a.total, brute_force(c));
    std::vector<std::size_t> used = a.assignment;
    std::sort(used.begin(), used.end());
    EXPECT_EQ(std::adjacent_find(used.begin(), used.end()), used.end());
  }
}

namespace {

// Slot log-distributions held as constants, from per-slot probability rows.
struct HandSlots {
  tensor::Graph g;
  SlotLogits slots;
  HandSlots(const Tensor& rel, const Tensor& ss, const Tensor& se, const Tensor& os, const Tensor& oe) {
    auto logs = [&](const Tensor& p) {
      Tensor t = p;
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::log(t[i]);
      return g.leaf(t);
    };
    slots = {logs(rel), logs(ss), logs(se), logs(os), logs(oe)};
  }
};

Tensor uniform(std::size_t rows, std::size_t cols) {
  return Tensor({rows, cols}, 1.0 / static_cast<double>(cols));
}

Tensor one_hot_rows(std::size_t cols, const std::vector<std::size_t>& hot, double mass = 1.0 - 1e-12) {
  Tensor t({hot.size(), cols}, (1.0 - mass) / static_cast<double>(cols - 1));
  for (std::size_t r = 0; r < hot.size(); ++r) t.at(r, hot[r]) = mass;
  return t;
}

}  // namespace

TEST(MatchCost, UniformIsFourLogLPlusLogC) {
  HandSlots h(uniform(2, 7), uniform(2, 9), uniform(2, 9), uniform(2, 9), uniform(2, 9));
  EXPECT_NEAR(triple_match_cost({1, 2, 3, 3, Relationship::WhereTc}, h.slots, 1), 4 * std::log(9.0) + std::log(7.0),
              1e-12);
}

TEST(MatchCost, PerfectSlotCostsZeroAndMonotone) {
  OperatorTriple t{1, 1, 4, 4, Relationship::SelectTc};
  HandSlots perfect(one_hot_rows(7, {5}, 1.0), one_hot_rows(6, {1}, 1.0), one_hot_rows(6, {1}, 1.0),
                    one_hot_rows(6, {4}, 1.0), one_hot_rows(6, {4}, 1.0));
  EXPECT_EQ(triple_match_cost(t, perfect.slots, 0), 0.0);
  double last = INFINITY;
  for (double p : {0.2, 0.4, 0.6, 0.8}) {
    HandSlots h(one_hot_rows(7, {5}, p), uniform(1, 6), uniform(1, 6), uniform(1, 6), uniform(1, 6));
    const double c = triple_match_cost(t, h.slots, 0);
    EXPECT_LT(c, last);
    last = c;
  }
}

TEST(OteLoss, HandEvaluatedSingleTriple) {
  // Z = 2, L = 3; the gold triple prefers slot 1.
  Tensor rel({2, 7}, 0.1);
  rel.at(0, 6) = 0.4;
  rel.at(1, 5) = 0.4;
  Tensor span = Tensor::matrix({{0.2, 0.5, 0.3}, {0.1, 0.7, 0.2}});
  HandSlots h(rel, span, span, span, span);
  OperatorTriple g{1, 1, 2, 2, Relationship::SelectTc};
  const double expect = -(std::log(0.4) + 2 * std::log(0.7) + 2 * std::log(0.2)) - std::log(0.4);
  EXPECT_NEAR(ote_loss({g}, h.slots).value().item(), expect, 1e-12);
}

TEST(OteLoss, PerfectPredictionsNearZero) {
  HandSlots h(one_hot_rows(7, {6, 2, 6}), one_hot_rows(5, {0, 3, 0}), one_hot_rows(5, {0, 3, 0}),
              one_hot_rows(5, {0, 4, 0}), one_hot_rows(5, {0, 4, 0}));
  auto l = ote_loss({{3, 3, 4, 4, Relationship::WhereTc}}, h.slots).value().item();
  EXPECT_GE(l, 0.0);
  EXPECT_LT(l, 1e-9);
  EXPECT_GT(ote_loss({{3, 3, 4, 4, Relationship::GroupByTc}}, h.slots).value().item(), 10.0);
}

TEST(OteLoss, RejectsNoneGoldAndOverflow) {
  HandSlots h(uniform(1, 7), uniform(1, 4), uniform(1, 4), uniform(1, 4), uniform(1, 4));
  EXPECT_THROW(ote_loss({{0, 0, 1, 1, Relationship::None}}, h.slots), OteError);
  EXPECT_THROW(ote_loss({{0, 0, 1, 1, Relationship::WhereTc}, {0, 0, 2, 2, Relationship::WhereTc}}, h.slots), OteError);
}

namespace {

struct SmallOte {
  tensor::ParameterStore store;
  OteModel model;
  Tensor states;
  explicit SmallOte(std::size_t slots = 6, std::size_t len = 7, std::size_t layers = 1) {
    tensor::Rng rng(404);
    model = make_ote(store, {slots, layers, 2, 0.0}, 8, rng);
    states = Tensor({len, 8});
    for (std::size_t i = 0; i < states.size(); ++i) states[i] = rng.uniform(-1, 1);
  }
  template <class F>
  auto with(F f) {
    tensor::Graph g;
    tensor::Binding b(g, store);
    nn::Context ctx(b, false, 0);
    return f(ctx, run_ote(ctx, model, ctx.constant(states)));
  }
};

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  Tensor out(t.shape());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) out.at(r, c) = t.at(perm[r], c);
  return out;
}

}  // namespace

TEST(OteModel, ExactlyZSlotsInBounds) {
  SmallOte o(20, 9);
  o.with([](nn::Context&, const SlotLogits& s) {
    EXPECT_EQ(s.relation.rows(), 20u);
    EXPECT_EQ(s.relation.cols(), kRelationshipCount);
    EXPECT_EQ(s.o_end.cols(), 9u);
    for (const auto& t : decode_triples(s)) {
      EXPECT_LE(t.s_start, t.s_end);
      EXPECT_LE(t.o_start, t.o_end);
      EXPECT_LT(t.o_end, 9u);
      EXPECT_NE(t.r, Relationship::None);
    }
    return 0;
  });
  auto a = o.with([](nn::Context&, const SlotLogits& s) { return s.relation.value(); });
  auto b = o.with([](nn::Context&, const SlotLogits& s) { return s.relation.value(); });
  EXPECT_EQ(a, b);
}

TEST(OteLoss, InvariantUnderGoldAndSlotPermutations) {
  SmallOte o;
  TripleSet gold = {{1, 1, 2, 2, Relationship::SelectTc}, {1, 1, 3, 3, Relationship::WhereTc},
                    {4, 4, 5, 5, Relationship::JoinOnCc}, {0, 0, 6, 6, Relationship::OrderByTc}};
  o.with([&](nn::Context&, const SlotLogits& s) {
    const double base = ote_loss(gold, s).value().item();
    EXPECT_GT(base, 0.0);
    tensor::Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      auto g = gold;
      for (std::size_t i = g.size() - 1; i > 0; --i) std::swap(g[i], g[rng.below(i + 1)]);
      EXPECT_NEAR(ote_loss(g, s).value().item(), base, 1e-9);
      std::vector<std::size_t> perm(6);
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = 5; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
      tensor::Graph h;
      SlotLogits p{h.leaf(permute_rows(s.relation.value(), perm)), h.leaf(permute_rows(s.s_start.value(), perm)),
                   h.leaf(permute_rows(s.s_end.value(), perm)), h.leaf(permute_rows(s.o_start.value(), perm)),
                   h.leaf(permute_rows(s.o_end.value(), perm))};
      EXPECT_NEAR(ote_loss(g, p).value().item(), base, 1e-9);
    }
    return 0;
  });
}

TEST(OteLoss, GradientCheckThroughDecoder) {
  SmallOte o(3, 5, 1);
  TripleSet gold = {{1, 1, 2, 2, Relationship::SelectTc}, {1, 1, 3, 4, Relationship::WhereTc}};
  auto err = nn::gradient_check(
      o.store, [&](nn::Context& ctx) { return ote_loss(gold, run_ote(ctx, o.model, ctx.constant(o.states))); }, 1e-5);
  EXPECT_LT(err, 1e-3);
}

TEST(Export, JsonLinesUseNodeText) {
  auto p = triples_of("car_1", "SELECT T1.FullName FROM car_makers AS T1 JOIN model_list AS T2 ON T1.Id = T2.Maker");
  auto text = triples_to_jsonl(p.triples, p.seq, *p.s);
  EXPECT_NE(text.find(R"({"object":"model_list.Maker","relationship":"JOIN_ON_CC","subject":"car_makers.Id"})"),
            std::string::npos)
      << text;
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), static_cast<long>(p.triples.size()));
}
