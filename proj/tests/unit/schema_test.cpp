#include <gtest/gtest.h>

#include "../support/toy.hpp"
#include "mtsql/linking/text.hpp"
#include "mtsql/schema/relations.hpp"

using namespace mtsql::schema;
using nlohmann::json;

namespace {

const SchemaGraph& db(const std::string& id) { return mtsql::testing::toy_schemas().at(id); }

json tiny() {
  return json::parse(R"({
    "db_id": "t", "table_names_original": ["A", "B"], "table_names": ["a", "b"],
    "column_names_original": [[-1, "*"], [0, "id"], [0, "x"], [1, "id"], [1, "a_id"]],
    "column_names": [[-1, "*"], [0, "id"], [0, "x"], [1, "id"], [1, "a id"]],
    "column_types": ["text", "number", "text", "number", "number"],
    "primary_keys": [1, 3], "foreign_keys": [[4, 1]]})");
}

}  // namespace

TEST(Schema, ToyFileLoads) {
  const auto& s = db("car_1");
  EXPECT_EQ(s.tables.size(), 4u);
  auto makers = s.find_table("CAR_MAKERS");
  ASSERT_TRUE(makers);
  EXPECT_TRUE(s.find_column(*makers, "fullname"));
  EXPECT_FALSE(s.foreign_keys.empty());
  EXPECT_TRUE(s.has_values());
}

TEST(Schema, DropsStarAndReindexes) {
  auto s = load_schema(tiny());
  ASSERT_EQ(s.columns.size(), 4u);
  EXPECT_EQ(s.qualified(3), "b.a_id");
  EXPECT_EQ(s.primary_keys, (std::set<int>{0, 2}));
  EXPECT_EQ(s.foreign_keys, (std::set<std::pair<int, int>>{{3, 0}}));
  EXPECT_EQ(s.columns[3].words, (std::vector<std::string>{"a", "id"}));
}

TEST(Schema, SpiderJsonRoundTrip) {
  for (const auto& [id, s] : mtsql::testing::toy_schemas()) {
    auto back = load_schema(to_spider_json(s));
    auto expect = s;
    expect.values.clear();
    back.values.clear();
    EXPECT_EQ(back, expect) << id;
  }
}

TEST(Schema, RejectsBrokenEntries) {
  auto missing = tiny();
  missing.erase("column_types");
  EXPECT_THROW(load_schema(missing), SchemaError);
  auto empty = tiny();
  empty["table_names_original"] = json::array();
  empty["table_names"] = json::array();
  empty["column_names_original"] = json::array({json::array({-1, "*"})});
  empty["column_names"] = empty["column_names_original"];
  empty["column_types"] = json::array({"text"});
  empty["primary_keys"] = json::array();
  empty["foreign_keys"] = json::array();
  EXPECT_THROW(load_schema(empty), SchemaError);
  auto dangling = tiny();
  dangling["foreign_keys"] = json::array({json::array({4, 9})});
  EXPECT_THROW(load_schema(dangling), SchemaError);
}

TEST(Database, ArityChecked) {
  auto s = load_schema(tiny());
  auto doc = json::parse(R"({"db_id": "t", "tables": {"A": [[1, "p"]], "B": [[1]]}})");
  EXPECT_THROW(load_database(doc, s), SchemaError);
  doc["tables"]["B"] = json::array({json::array({1, 1})});
  auto d = load_database(doc, s);
  attach_values(s, d);
  EXPECT_EQ(s.values[1], (std::vector<std::string>{"p"}));
  EXPECT_EQ(render_cell(3.0), "3");
  EXPECT_EQ(render_cell(2.5), "2.5");
}

TEST(Relations, VocabularySizes) {
  EXPECT_EQ(relation_name(Relation::QcExact), "qc_exact_match");
  int schema = 0, link = 0;
  for (std::size_t i = 0; i < kRelationCount; ++i) {
    schema += is_schema_relation(static_cast<Relation>(i));
    link += is_link_relation(static_cast<Relation>(i));
  }
  EXPECT_EQ(schema, static_cast<int>(kSchemaRelationCount));
  EXPECT_EQ(link, 9);
}

TEST(Relations, SerializedLength) {
  auto s = load_schema(tiny());
  auto seq = serialize_input({"how", "many"}, s);
  // <s> q q </s> A id x B id a_id </s>
  EXPECT_EQ(seq.size(), 2u + 3u + 6u);
  EXPECT_EQ(seq.nodes[seq.table_pos[1]].kind, NodeKind::Table);
  EXPECT_EQ(seq.nodes[seq.column_pos[3]].ref, 3);
  EXPECT_THROW(serialize_input({}, s), std::invalid_argument);
}

TEST(Relations, SchemaPairLabels) {
  auto s = load_schema(tiny());
  EXPECT_EQ(table_column_relation(s, 0, 0), Relation::TcPrimaryKey);
  EXPECT_EQ(table_column_relation(s, 0, 1), Relation::TcTableMatch);
  EXPECT_EQ(column_table_relation(s, 1, 0), Relation::CtTableMatch);
  EXPECT_EQ(column_table_relation(s, 3, 0), Relation::CtForeignKey);
  EXPECT_EQ(table_table_relation(s, 1, 0), Relation::TtForeignKeyF);
  EXPECT_EQ(table_table_relation(s, 0, 1), Relation::TtForeignKeyB);
  EXPECT_EQ(column_column_relation(s, 3, 0), Relation::CcForeignKeyF);
  EXPECT_EQ(column_column_relation(s, 0, 3), Relation::CcForeignKeyB);
  EXPECT_EQ(column_column_relation(s, 0, 1), Relation::CcTableMatch);
  EXPECT_EQ(column_column_relation(s, 1, 2), Relation::CcNone);
}

TEST(Relations, DirectionalLabelsAreDual) {
  for (const auto& [id, s] : mtsql::testing::toy_schemas()) {
    auto seq = serialize_input({"list", "all"}, s);
    auto m = build_schema_relations(s, seq);
    for (std::size_t i = 0; i < m.size(); ++i) {
      EXPECT_EQ(m.at(i, i), Relation::SelfIdentity);
      for (std::size_t j = 0; j < m.size(); ++j) {
        auto a = m.at(i, j), b = m.at(j, i);
        if (a == Relation::TtForeignKeyF) EXPECT_EQ(b, Relation::TtForeignKeyB);
        if (a == Relation::CcForeignKeyF) EXPECT_EQ(b, Relation::CcForeignKeyB);
        if (a == Relation::TtForeignKeyBoth || a == Relation::CcTableMatch || a == Relation::TtNone)
          EXPECT_EQ(b, a);
        if (a == Relation::CtTableMatch || a == Relation::CtPrimaryKey)
          EXPECT_TRUE(b == Relation::TcTableMatch || b == Relation::TcPrimaryKey);
      }
    }
  }
}
