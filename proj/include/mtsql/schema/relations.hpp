#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mtsql/schema/schema.hpp"

namespace mtsql::schema {

// Closed relation vocabulary: schema-internal labels, then question-schema
// link labels. Values are embedding-table rows.
enum class Relation : std::uint8_t {
  None,
  SelfIdentity,
  TcPrimaryKey,
  TcTableMatch,
  CtPrimaryKey,
  CtForeignKey,
  CtTableMatch,
  TtForeignKeyF,
  TtForeignKeyB,
  TtForeignKeyBoth,
  TtNone,
  CcTableMatch,
  CcForeignKeyF,
  CcForeignKeyB,
  CcNone,
  QtExact,
  QtPartial,
  QtStem,
  QcExact,
  QcPartial,
  QcStem,
  QvExact,
  QvPartial,
  QvStem,
};

inline constexpr std::size_t kRelationCount = 24;
inline constexpr std::size_t kSchemaRelationCount = 15;

std::string_view relation_name(Relation r);
bool is_schema_relation(Relation r);
bool is_link_relation(Relation r);

enum class NodeKind : std::uint8_t { Separator, Question, Table, Column };

struct InputNode {
  NodeKind kind;
  std::vector<std::string> words;  // a separator has one pseudo-word
  int ref = -1;                    // question word index, table id or column id
};

// <s> w_1..w_m </s> t_1 c_11 c_12 ... t_2 c_21 ... </s>
struct InputSequence {
  std::vector<InputNode> nodes;
  std::size_t question_length = 0;
  std::vector<std::size_t> table_pos;
  std::vector<std::size_t> column_pos;

  std::size_t size() const { return nodes.size(); }
  std::size_t question_pos(std::size_t i) const { return 1 + i; }
  bool operator==(const InputSequence&) const = default;
};

InputSequence serialize_input(const std::vector<std::string>& question, const SchemaGraph& schema);

class RelationMatrix {
 public:
  RelationMatrix() = default;
  explicit RelationMatrix(std::size_t n) : n_(n), cells_(n * n, Relation::None) {}
  std::size_t size() const { return n_; }
  Relation at(std::size_t i, std::size_t j) const { return cells_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, Relation r) { cells_[i * n_ + j] = r; }
  // Row-major label ids.
  std::vector<std::size_t> indices() const;
  bool operator==(const RelationMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<Relation> cells_;
};

// Label of an ordered pair of schema nodes.
Relation table_column_relation(const SchemaGraph& s, int table, int column);
Relation column_table_relation(const SchemaGraph& s, int column, int table);
Relation table_table_relation(const SchemaGraph& s, int x, int y);
Relation column_column_relation(const SchemaGraph& s, int x, int y);

// Schema-internal cells over `seq`; every other cell is None except the
// diagonal (SelfIdentity).
RelationMatrix build_schema_relations(const SchemaGraph& schema, const InputSequence& seq);

}  // namespace mtsql::schema
