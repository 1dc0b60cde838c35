#include <gtest/gtest.h>

#include "../support/toy.hpp"
#include "mtsql/sql/ast.hpp"
#include "mtsql/sql/clauses.hpp"
#include "mtsql/sql/ra.hpp"

using namespace mtsql;
using namespace mtsql::sql;

namespace {

const schema::SchemaGraph& db(const std::string& id) { return mtsql::testing::toy_schemas().at(id); }

ClauseSets dc(const std::string& q, const std::string& id) { return decompose_clauses(*parse_sql(q, db(id))); }

}  // namespace

TEST(Parse, MinimalSelect) {
  const auto& s = db("employee_hire");
  auto q = parse_sql("SELECT name FROM employee", s);
  ASSERT_EQ(q->select.size(), 1u);
  EXPECT_EQ(s.qualified(q->select[0].val.left.column), "employee.name");
  ASSERT_EQ(q->from.tables.size(), 1u);
  EXPECT_EQ(q->from.tables[0].table, *s.find_table("employee"));
}

TEST(Parse, JoinConditionResolvesAliases) {
  const auto& s = db("car_1");
  auto q = parse_sql(
      "SELECT T1.FullName, T1.Id, count(*) FROM CAR_MAKERS AS T1 JOIN MODEL_LIST AS T2 ON T1.Id = T2.Maker "
      "GROUP BY T1.Id",
      s);
  ASSERT_EQ(q->from.joins.size(), 1u);
  const auto& p = q->from.joins[0];
  EXPECT_EQ(s.qualified(p.lhs.left.column), "car_makers.id");
  ASSERT_EQ(p.rhs.kind, Operand::Kind::Column);
  EXPECT_EQ(s.qualified(p.rhs.column.column), "model_list.maker");
  EXPECT_EQ(q->select[2].agg, Agg::Count);
  EXPECT_EQ(q->group_by.size(), 1u);
}

TEST(Parse, Errors) {
  const auto& s = db("employee_hire");
  EXPECT_THROW(parse_sql("SELECT FROM", s), ParseError);
  EXPECT_THROW(parse_sql("SELECT name FROM nowhere", s), ParseError);
  try {
    parse_sql("SELECT nme FROM employee", s);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position, 7u);
  }
}

TEST(Parse, NotInAndBetween) {
  const auto& s = db("concert_singer");
  auto q = parse_sql("SELECT name FROM stadium WHERE stadium_id NOT IN (SELECT stadium_id FROM concert)", s);
  ASSERT_TRUE(q->where);
  EXPECT_TRUE(q->where->pred.negated);
  EXPECT_EQ(q->where->pred.op, Cmp::In);
  auto b = parse_sql("SELECT name FROM stadium WHERE capacity BETWEEN 5000 AND 10000", s);
  EXPECT_EQ(b->where->pred.op, Cmp::Between);
  EXPECT_EQ(b->where->pred.rhs2->literal.text, "10000");
}

TEST(Parse, AndBindsTighterThanOr) {
  const auto& s = db("concert_singer");
  auto q = parse_sql("SELECT concert_name FROM concert WHERE year = 1 OR year = 2 AND stadium_id = 3", s);
  ASSERT_TRUE(q->where);
  EXPECT_EQ(q->where->kind, BoolExpr::Kind::Or);
  EXPECT_EQ(q->where->children[1].kind, BoolExpr::Kind::And);
}

TEST(Clauses, ConjunctOrderIrrelevant) {
  EXPECT_EQ(dc("SELECT name FROM employee WHERE age = 1 AND city = 'x'", "employee_hire"),
            dc("SELECT name FROM employee WHERE city = 'x' AND age = 1", "employee_hire"));
}

TEST(Clauses, OrderByIsOrdered) {
  EXPECT_FALSE(dc("SELECT name FROM employee ORDER BY age, city", "employee_hire") ==
               dc("SELECT name FROM employee ORDER BY city, age", "employee_hire"));
}

TEST(Clauses, LiteralNormalization) {
  EXPECT_EQ(dc("SELECT name FROM employee WHERE city = 'Bath'", "employee_hire"),
            dc("SELECT name FROM employee WHERE city = \"bath\"", "employee_hire"));
  EXPECT_EQ(dc("SELECT name FROM employee WHERE age = 30", "employee_hire"),
            dc("SELECT name FROM employee WHERE age = 30.0", "employee_hire"));
}

TEST(Clauses, ExtraSelectColumnBreaksMatch) {
  const std::string gold =
      "SELECT T1.fullname, T1.id, count(*) FROM car_makers AS T1 JOIN model_list AS T2 ON T1.id = T2.maker "
      "GROUP BY T1.id";
  const std::string pred =
      "SELECT T1.fullname, T1.id, T1.maker, count(*) FROM car_makers AS T1 JOIN model_list AS T2 ON T1.id = "
      "T2.maker GROUP BY T1.id";
  EXPECT_FALSE(dc(gold, "car_1") == dc(pred, "car_1"));
  EXPECT_EQ(dc(gold, "car_1"), dc(gold, "car_1"));
}

TEST(Ra, SmallestTreeHasHeightOne) {
  const auto& s = db("employee_hire");
  auto t = to_relational_algebra(*parse_sql("SELECT name FROM employee", s));
  EXPECT_EQ(t->op, RaOp::Projection);
  EXPECT_EQ(t->height, 1);
  EXPECT_EQ(render_sql(t, s), "SELECT Name FROM employee");
}

TEST(Ra, WhereAddsOneSelectionLayer) {
  const auto& s = db("employee_hire");
  auto a = to_relational_algebra(*parse_sql("SELECT name FROM employee", s));
  auto b = to_relational_algebra(*parse_sql("SELECT name FROM employee WHERE age > 3", s));
  EXPECT_EQ(b->kids[1]->op, RaOp::Selection);
  EXPECT_EQ(b->height, std::max(a->height, b->kids[1]->height) + 1);
  EXPECT_EQ(b->kids[1]->height, b->kids[1]->kids[0]->height + 1);
}

TEST(Ra, IllTypedNodeRejected) {
  EXPECT_THROW(ra_node(RaOp::Selection, {ra_table(0), ra_table(1)}), RaError);
  EXPECT_THROW(ra_node(RaOp::Count, {ra_node(RaOp::Count, {ra_star()})}), RaError);
}

TEST(Corpus, RoundTripPreservesClauses) {
  for (const auto& p : mtsql::testing::toy_pairs()) {
    const auto& s = db(p.db_id);
    auto ast = parse_sql(p.query, s);
    auto tree = to_relational_algebra(*ast);
    EXPECT_EQ(recompute_height(tree), tree->height) << p.query;
    const std::string text = render_sql(tree, s);
    auto back = parse_sql(text, s);
    EXPECT_EQ(decompose_clauses(*back), decompose_clauses(*ast)) << p.query << "\n  rendered: " << text;
    EXPECT_EQ(to_relational_algebra(*back)->key, tree->key) << text;
    EXPECT_TRUE(decompose_clauses(*ast) == decompose_clauses(*ast));
  }
}

TEST(Corpus, RenderIsInjectiveOnCorpusTrees) {
  std::map<std::string, std::string> seen;
  for (const auto& p : mtsql::testing::toy_pairs()) {
    const auto& s = db(p.db_id);
    auto tree = to_relational_algebra(*parse_sql(p.query, s));
    const std::string text = p.db_id + ":" + render_sql(tree, s);
    auto [it, fresh] = seen.emplace(text, tree->key);
    if (!fresh) EXPECT_EQ(it->second, tree->key) << text;
  }
}
