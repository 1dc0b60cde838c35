#include <gtest/gtest.h>

#include <cmath>

#include "mtsql/linking/linking.hpp"
#include "mtsql/linking/text.hpp"
#include "mtsql/sql/ast.hpp"

using namespace mtsql;
using namespace mtsql::linking;
using schema::Relation;

namespace {

schema::SchemaGraph singers() {
  return schema::load_schema(nlohmann::json::parse(R"({
    "db_id": "s", "table_names_original": ["singer", "concert"], "table_names": ["singer", "concert"],
    "column_names_original": [[-1, "*"], [0, "Singer_ID"], [0, "Name"], [0, "Country"], [0, "Song_Name"],
                              [1, "concert_ID"], [1, "concert_Name"], [1, "Year"]],
    "column_names": [[-1, "*"], [0, "singer id"], [0, "name"], [0, "country"], [0, "song name"],
                     [1, "concert id"], [1, "concert name"], [1, "year"]],
    "column_types": ["text", "number", "text", "text", "text", "number", "text", "number"],
    "primary_keys": [1, 5], "foreign_keys": []})"));
}

bool has(const std::vector<LinkCandidate>& cs, std::size_t b, std::size_t e, LinkCategory cat, int node, MatchGrade g) {
  return std::find(cs.begin(), cs.end(), LinkCandidate{b, e, cat, node, g}) != cs.end();
}

std::size_t count_node(const std::vector<LinkCandidate>& cs, LinkCategory cat, int node) {
  return std::count_if(cs.begin(), cs.end(), [&](const auto& c) { return c.category == cat && c.node == node; });
}

const auto kQuestion = tokenize("show the song name and names of singers in concert year");

}  // namespace

TEST(Candidates, GradesAndCoverage) {
  auto cs = candidate_links(kQuestion, singers());
  using C = LinkCategory;
  using G = MatchGrade;
  EXPECT_TRUE(has(cs, 2, 4, C::Column, 3, G::Exact));
  // "name" inside the matched "song name" span still links to other columns
  EXPECT_TRUE(has(cs, 3, 4, C::Column, 1, G::Exact));
  EXPECT_TRUE(has(cs, 3, 4, C::Column, 5, G::Partial));
  EXPECT_TRUE(has(cs, 5, 6, C::Column, 1, G::StemPartial));
  EXPECT_TRUE(has(cs, 7, 8, C::Table, 0, G::StemPartial));
  EXPECT_TRUE(has(cs, 7, 8, C::Column, 0, G::StemPartial));
  EXPECT_TRUE(has(cs, 9, 10, C::Table, 1, G::Exact));
  EXPECT_TRUE(has(cs, 10, 11, C::Column, 6, G::Exact));
  // smaller n-grams inside the "song name" match are not re-matched for song_name
  EXPECT_FALSE(has(cs, 2, 3, C::Column, 3, G::Partial));
  EXPECT_FALSE(has(cs, 3, 4, C::Column, 3, G::Partial));
  EXPECT_EQ(count_node(cs, C::Column, 2), 0u);
}

TEST(Candidates, OneGradePerSpanAndNode) {
  auto cs = candidate_links(kQuestion, singers());
  for (std::size_t i = 0; i < cs.size(); ++i)
    for (std::size_t j = i + 1; j < cs.size(); ++j)
      EXPECT_FALSE(cs[i].start == cs[j].start && cs[i].end == cs[j].end && cs[i].category == cs[j].category &&
                   cs[i].node == cs[j].node);
}

TEST(Candidates, StopwordSpansOnlyMatchExactly) {
  auto cs = candidate_links(kQuestion, singers());
  for (const auto& c : cs) {
    bool all_stop = true;
    for (std::size_t i = c.start; i < c.end; ++i) all_stop = all_stop && is_stopword(kQuestion[i]);
    EXPECT_FALSE(all_stop) << c.start;
  }
}

TEST(Candidates, ValuesLinkToTheirColumn) {
  auto s = singers();
  s.values.assign(s.columns.size(), {});
  s.values[2] = {"France", "United States"};
  auto cs = candidate_links(tokenize("singers from United States"), s);
  EXPECT_TRUE(has(cs, 2, 4, LinkCategory::Value, 2, MatchGrade::Exact));
  EXPECT_FALSE(has(cs, 2, 3, LinkCategory::Value, 2, MatchGrade::Partial));
  EXPECT_EQ(count_node(cs, LinkCategory::Value, 2), 1u);
}

TEST(Candidates, EmptyQuestion) { EXPECT_TRUE(candidate_links({}, singers()).empty()); }

TEST(LinkRelation, CoversTheNineLabels) {
  std::set<Relation> seen;
  for (auto c : {LinkCategory::Table, LinkCategory::Column, LinkCategory::Value})
    for (auto g : {MatchGrade::Exact, MatchGrade::Partial, MatchGrade::StemPartial}) {
      auto r = link_relation(c, g);
      EXPECT_TRUE(schema::is_link_relation(r));
      seen.insert(r);
    }
  EXPECT_EQ(seen.size(), 9u);
  EXPECT_EQ(link_relation(LinkCategory::Column, MatchGrade::StemPartial), Relation::QcStem);
}

TEST(Filter, ThresholdAndSymmetry) {
  auto s = singers();
  auto seq = schema::serialize_input(kQuestion, s);
  auto r = schema::build_schema_relations(s, seq);
  const auto before = r;
  std::vector<LinkCandidate> cs = {{3, 4, LinkCategory::Column, 1, MatchGrade::Exact},
                                   {9, 10, LinkCategory::Table, 1, MatchGrade::Exact}};
  filter_links(r, seq, cs, {0.7, 0.69}, 0.7);
  const auto q = seq.question_pos(3), c = seq.column_pos[1];
  EXPECT_EQ(r.at(q, c), Relation::QcExact);
  EXPECT_EQ(r.at(c, q), Relation::QcExact);
  EXPECT_EQ(r.at(seq.question_pos(9), seq.table_pos[1]), Relation::None);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < r.size(); ++j) changed += r.at(i, j) != before.at(i, j);
  EXPECT_EQ(changed, 2u);
}

TEST(Filter, NameMatchBeatsValueMatchOnOneCell) {
  auto s = singers();
  auto seq = schema::serialize_input(kQuestion, s);
  schema::RelationMatrix r(seq.size());
  std::vector<LinkCandidate> cs = {{3, 4, LinkCategory::Value, 1, MatchGrade::Exact},
                                   {3, 4, LinkCategory::Column, 1, MatchGrade::StemPartial}};
  filter_links(r, seq, cs, {0.9, 0.9}, 0.5);
  EXPECT_EQ(r.at(seq.question_pos(3), seq.column_pos[1]), Relation::QcStem);
}

TEST(Filter, ScoreCountMustMatch) {
  auto s = singers();
  auto seq = schema::serialize_input(kQuestion, s);
  schema::RelationMatrix r(seq.size());
  EXPECT_THROW(filter_links(r, seq, {{0, 1, LinkCategory::Table, 0, MatchGrade::Exact}}, {}, 0.5),
               std::invalid_argument);
}

TEST(GoldLabels, ReferencedTablesAndColumns) {
  auto s = singers();
  auto q = sql::parse_sql("SELECT name FROM singer WHERE country = 'France'", s);
  std::vector<LinkCandidate> cs = {{0, 1, LinkCategory::Table, 0, MatchGrade::Exact},
                                   {0, 1, LinkCategory::Table, 1, MatchGrade::Exact},
                                   {0, 1, LinkCategory::Column, 1, MatchGrade::Exact},
                                   {0, 1, LinkCategory::Value, 2, MatchGrade::Exact},
                                   {0, 1, LinkCategory::Column, 3, MatchGrade::Exact}};
  EXPECT_EQ(gold_link_labels(cs, *q), (std::vector<double>{1, 0, 1, 1, 0}));
}

TEST(Weights, BalancedSumsToCount) {
  std::vector<double> y = {1, 0, 0, 0};
  auto w = link_weights(y, LinkWeighting::Balanced);
  EXPECT_DOUBLE_EQ(w[0], 2.0);
  EXPECT_DOUBLE_EQ(w[1], 4.0 / 6.0);
  EXPECT_DOUBLE_EQ(w[0] + w[1] + w[2] + w[3], 4.0);
  EXPECT_EQ(link_weights(y, LinkWeighting::Uniform), (std::vector<double>(4, 1.0)));
}

namespace {

struct SldFixture {
  tensor::ParameterStore store;
  tensor::Rng rng{3};
  SldModel m;
  explicit SldFixture(std::size_t d, std::size_t hidden = 16) : m(make_sld(store, d, hidden, rng)) {}
};

tensor::Tensor row(std::initializer_list<double> v) {
  tensor::Tensor t({1, v.size()});
  std::copy(v.begin(), v.end(), &t[0]);
  return t;
}

}  // namespace

TEST(Sld, ZeroWeightsGiveOneHalf) {
  SldFixture f(3);
  for (auto& t : f.store.values()) t = tensor::Tensor(t.shape(), 0.0);
  tensor::Graph g;
  tensor::Binding b(g, f.store);
  nn::Context ctx(b, false, 0);
  auto p = sld_score(ctx, f.m, ctx.constant(row({1, 2, 3})), ctx.constant(row({-1, 0, 4})));
  EXPECT_DOUBLE_EQ(p.value().item(), 0.5);
}

TEST(Sld, DimensionMismatchRejected) {
  SldFixture f(3);
  tensor::Graph g;
  tensor::Binding b(g, f.store);
  nn::Context ctx(b, false, 0);
  EXPECT_THROW(sld_score(ctx, f.m, ctx.constant(row({1, 2})), ctx.constant(row({1, 2, 3}))), tensor::ShapeError);
}

TEST(Sld, BatchedScoresMatchPairwise) {
  auto s = singers();
  auto seq = schema::serialize_input(kQuestion, s);
  auto cs = candidate_links(kQuestion, s);
  SldFixture f(4);
  tensor::Rng rng(5);
  tensor::Tensor chi({seq.size(), 4});
  for (std::size_t i = 0; i < chi.size(); ++i) chi[i] = rng.uniform(-1, 1);
  tensor::Graph g;
  tensor::Binding b(g, f.store);
  nn::Context ctx(b, false, 0);
  auto x = ctx.constant(chi);
  auto batch = sld_scores(ctx, f.m, x, seq, cs);
  ASSERT_EQ(batch.rows(), cs.size());
  for (std::size_t k = 0; k < cs.size(); ++k) {
    tensor::Tensor q({1, 4}, 0.0), sv({1, 4}, 0.0);
    const double n = static_cast<double>(cs[k].end - cs[k].start);
    for (std::size_t i = cs[k].start; i < cs[k].end; ++i)
      for (std::size_t c = 0; c < 4; ++c) q[c] += chi.at(seq.question_pos(i), c) / n;
    for (std::size_t c = 0; c < 4; ++c) sv[c] = chi.at(node_position(seq, cs[k]), c);
    EXPECT_NEAR(batch.value()[k], sld_score(ctx, f.m, ctx.constant(q), ctx.constant(sv)).value().item(), 1e-12);
  }
}

TEST(Sld, LossAtOneHalfIsMLn2) {
  tensor::Graph g;
  auto p = g.constant(tensor::Tensor({5, 1}, 0.5));
  auto l = sld_loss(p, {1, 0, 1, 0, 0}, std::vector<double>(5, 1.0));
  EXPECT_NEAR(l.value().item(), 5 * std::log(2.0), 1e-12);
  EXPECT_THROW(sld_loss(p, {1, 0, 1, 0, 0}, {1, 1, 0, 1, 1}), std::invalid_argument);
}

TEST(Sld, GradientCheck) {
  SldFixture f(3, 6);
  tensor::Rng rng(9);
  tensor::Tensor chi({4, 3});
  for (std::size_t i = 0; i < chi.size(); ++i) chi[i] = rng.uniform(-1, 1);
  auto err = nn::gradient_check(
      f.store,
      [&](nn::Context& ctx) {
        auto q = ctx.constant(chi);
        Var parts_q[] = {tensor::slice(q, 0, 0, 1), tensor::slice(q, 0, 2, 3)};
        auto p = sld_score(ctx, f.m, tensor::slice(q, 0, 1, 2), tensor::slice(q, 0, 3, 4));
        auto p2 = sld_score(ctx, f.m, parts_q[0], parts_q[1]);
        auto both = tensor::concat(std::vector<Var>{p, p2}, 0);
        return sld_loss(both, {1, 0}, {1.5, 0.5});
      },
      1e-5);
  EXPECT_LT(err, 1e-4);
}
