#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtsql/schema/schema.hpp"

namespace mtsql::sql {

enum class Agg { None, Count, Sum, Avg, Min, Max };
enum class Arith { None, Plus, Minus, Times, Div };
enum class Cmp { Eq, Neq, Lt, Gt, Le, Ge, Between, In, Like };
enum class SetOp { None, Union, Intersect, Except };

std::string_view agg_name(Agg a);
std::string_view arith_symbol(Arith a);
std::string_view cmp_symbol(Cmp c);
std::string_view set_op_name(SetOp s);

struct Query;
using QueryPtr = std::shared_ptr<Query>;

struct ColUnit {
  Agg agg = Agg::None;
  int column = -1;  // -1 is "*"
  bool distinct = false;
  int source = -1;  // index into the owning FROM list; -1 when unresolved/outer
  bool star() const { return column < 0; }
};

struct ValUnit {
  Arith op = Arith::None;
  ColUnit left;
  ColUnit right;  // used when op != None
};

struct Literal {
  std::string text;  // without quotes
  bool is_string = false;
};

struct Operand {
  enum class Kind { Literal, Column, Subquery } kind = Kind::Literal;
  Literal literal;
  ColUnit column;
  QueryPtr subquery;
};

struct Predicate {
  bool negated = false;
  Cmp op = Cmp::Eq;
  ValUnit lhs;
  Operand rhs;
  std::optional<Operand> rhs2;  // BETWEEN upper bound
};

struct BoolExpr {
  enum class Kind { Pred, And, Or } kind = Kind::Pred;
  Predicate pred;
  std::vector<BoolExpr> children;
};

struct SelectItem {
  Agg agg = Agg::None;
  ValUnit val;
};

struct TableUnit {
  int table = -1;     // when sub is null
  QueryPtr sub;       // FROM (SELECT ...)
};

struct FromClause {
  std::vector<TableUnit> tables;
  std::vector<Predicate> joins;  // ON conditions, conjunctive
};

struct OrderBy {
  bool desc = false;
  std::vector<ValUnit> keys;
};

struct Query {
  bool distinct = false;
  std::vector<SelectItem> select;
  FromClause from;
  std::optional<BoolExpr> where;
  std::vector<ColUnit> group_by;
  std::optional<BoolExpr> having;
  std::optional<OrderBy> order;
  std::optional<long long> limit;
  SetOp set_op = SetOp::None;
  QueryPtr set_rhs;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t pos)
      : std::runtime_error(msg + " at offset " + std::to_string(pos)), position(pos) {}
  std::size_t position;
};

QueryPtr parse_sql(std::string_view text, const schema::SchemaGraph& schema);

// Canonical SQL text of an AST; aliases T1..Tn are introduced when FROM has
// more than one table unit.
std::string to_sql(const Query& q, const schema::SchemaGraph& schema);

nlohmann::json to_json(const Query& q, const schema::SchemaGraph& schema);

// Every table and column id mentioned anywhere in the query (all clauses and
// subqueries). Star columns are skipped.
void collect_schema_refs(const Query& q, std::vector<int>& tables, std::vector<int>& columns);

bool has_join(const Query& q);  // more than one table unit anywhere

// Normalized literal: quotes removed, strings lowercased, numbers in %.15g.
std::string normalize_literal(const Literal& lit);

}  // namespace mtsql::sql
