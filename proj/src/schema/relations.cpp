#include "mtsql/schema/relations.hpp"

#include <array>

namespace mtsql::schema {

std::string_view relation_name(Relation r) {
  static constexpr std::array<std::string_view, kRelationCount> names{
      "none",           "self_identity",    "tc_primary_key",      "tc_table_match",
      "ct_primary_key", "ct_foreign_key",   "ct_table_match",      "tt_foreign_key_f",
      "tt_foreign_key_b", "tt_foreign_key_both", "tt_none",        "cc_table_match",
      "cc_foreign_key_f", "cc_foreign_key_b", "cc_none",           "qt_exact_match",
      "qt_partial_match", "qt_stem_match",  "qc_exact_match",      "qc_partial_match",
      "qc_stem_match",  "qv_exact_match",   "qv_partial_match",    "qv_stem_match"};
  return names[static_cast<std::size_t>(r)];
}

bool is_schema_relation(Relation r) { return static_cast<std::size_t>(r) < kSchemaRelationCount; }
bool is_link_relation(Relation r) { return !is_schema_relation(r); }

InputSequence serialize_input(const std::vector<std::string>& question, const SchemaGraph& schema) {
  if (question.empty()) throw std::invalid_argument("serialize_input: empty question");
  InputSequence seq;
  seq.question_length = question.size();
  seq.nodes.push_back({NodeKind::Separator, {"<s>"}, -1});
  for (std::size_t i = 0; i < question.size(); ++i)
    seq.nodes.push_back({NodeKind::Question, {question[i]}, static_cast<int>(i)});
  seq.nodes.push_back({NodeKind::Separator, {"</s>"}, -1});
  seq.table_pos.assign(schema.tables.size(), 0);
  seq.column_pos.assign(schema.columns.size(), 0);
  for (std::size_t t = 0; t < schema.tables.size(); ++t) {
    seq.table_pos[t] = seq.nodes.size();
    seq.nodes.push_back({NodeKind::Table, schema.tables[t].words, static_cast<int>(t)});
    for (int c : schema.tables[t].columns) {
      seq.column_pos[c] = seq.nodes.size();
      seq.nodes.push_back({NodeKind::Column, schema.columns[c].words, c});
    }
  }
  seq.nodes.push_back({NodeKind::Separator, {"</s>"}, -1});
  return seq;
}

std::vector<std::size_t> RelationMatrix::indices() const {
  std::vector<std::size_t> out(cells_.size());
  for (std::size_t i = 0; i < cells_.size(); ++i) out[i] = static_cast<std::size_t>(cells_[i]);
  return out;
}

Relation table_column_relation(const SchemaGraph& s, int table, int column) {
  if (s.columns.at(column).table != table) return Relation::None;
  return s.primary_keys.count(column) ? Relation::TcPrimaryKey : Relation::TcTableMatch;
}

Relation column_table_relation(const SchemaGraph& s, int column, int table) {
  if (s.columns.at(column).table == table) {
    return s.primary_keys.count(column) ? Relation::CtPrimaryKey : Relation::CtTableMatch;
  }
  for (auto [src, dst] : s.foreign_keys) {
    if (src == column && s.columns[dst].table == table) return Relation::CtForeignKey;
  }
  return Relation::None;
}

Relation table_table_relation(const SchemaGraph& s, int x, int y) {
  if (x == y) return Relation::SelfIdentity;
  bool fwd = false, back = false;
  for (auto [src, dst] : s.foreign_keys) {
    const int ts = s.columns[src].table, td = s.columns[dst].table;
    if (ts == x && td == y) fwd = true;
    if (ts == y && td == x) back = true;
  }
  if (fwd && back) return Relation::TtForeignKeyBoth;
  if (fwd) return Relation::TtForeignKeyF;
  if (back) return Relation::TtForeignKeyB;
  return Relation::TtNone;
}

Relation column_column_relation(const SchemaGraph& s, int x, int y) {
  if (x == y) return Relation::SelfIdentity;
  if (s.foreign_keys.count({x, y})) return Relation::CcForeignKeyF;
  if (s.foreign_keys.count({y, x})) return Relation::CcForeignKeyB;
  if (s.columns[x].table == s.columns[y].table) return Relation::CcTableMatch;
  return Relation::CcNone;
}

RelationMatrix build_schema_relations(const SchemaGraph& schema, const InputSequence& seq) {
  const std::size_t n = seq.size();
  RelationMatrix r(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = seq.nodes[i];
    for (std::size_t j = 0; j < n; ++j) {
      const auto& b = seq.nodes[j];
      if (i == j) {
        r.set(i, j, Relation::SelfIdentity);
        continue;
      }
      Relation label = Relation::None;
      if (a.kind == NodeKind::Table && b.kind == NodeKind::Column) {
        label = table_column_relation(schema, a.ref, b.ref);
      } else if (a.kind == NodeKind::Column && b.kind == NodeKind::Table) {
        label = column_table_relation(schema, a.ref, b.ref);
      } else if (a.kind == NodeKind::Table && b.kind == NodeKind::Table) {
        label = table_table_relation(schema, a.ref, b.ref);
      } else if (a.kind == NodeKind::Column && b.kind == NodeKind::Column) {
        label = column_column_relation(schema, a.ref, b.ref);
      }
      r.set(i, j, label);
    }
  }
  return r;
}

}  // namespace mtsql::schema
