#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mtsql/sql/ast.hpp"

namespace mtsql::sql {

enum class RaOp : std::uint8_t {
  // leaves
  Table, Column, Star, Value,
  // unary
  Count, Sum, Avg, Min, Max, Distinct, Derived, Not,
  // binary
  Plus, Minus, Times, Div, ExprList,
  Eq, Neq, Lt, Gt, Le, Ge, Like, NotLike, In, NotIn, Between, NotBetween, ValPair,
  And, Or,
  Product, On, Selection, GroupBy, Having, Projection, ProjectDistinct,
  OrderAsc, OrderDesc, Limit,
  Union, Intersect, Except,
};

inline constexpr std::size_t kRaOpCount = static_cast<std::size_t>(RaOp::Except) + 1;

// Result sort of a node; restricts which operators may combine which trees.
enum class Sort : std::uint8_t {
  Rel, Filtered, Grouped, HavingRel, Pred, Col, Star, Val, Agg, List, Pair,
  Query, Ordered, Limited, SetQuery,
};

std::string_view ra_op_name(RaOp op);
int ra_arity(RaOp op);
bool is_leaf_op(RaOp op);
bool is_complete(Sort s);  // a finished query

struct RaNode;
using RaTree = std::shared_ptr<const RaNode>;

// Immutable node; key and height are fixed at construction.
struct RaNode {
  RaOp op;
  std::vector<RaTree> kids;
  int ref = -1;          // table or column id for leaves
  Literal literal;       // Value leaves
  Sort sort;
  int height = 0;
  std::string key;       // canonical serialization, unique per canonical tree
};

class RaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RaTree ra_table(int table);
RaTree ra_column(int column);
RaTree ra_star();
RaTree ra_value(Literal lit);

// Sort of op applied to kids, or nullopt when the combination is ill-typed.
std::optional<Sort> result_sort(RaOp op, const std::vector<RaTree>& kids);
std::optional<Sort> result_sort(RaOp op, const RaNode* a, const RaNode* b);
// Builds a node; throws RaError when ill-typed.
RaTree ra_node(RaOp op, std::vector<RaTree> kids);

RaTree to_relational_algebra(const Query& q);
// Inverse of the lowering; throws RaError on trees that are not a query.
QueryPtr lift_query(const RaTree& t, const schema::SchemaGraph& schema);
std::string render_sql(const RaTree& t, const schema::SchemaGraph& schema);

// Distinct subtrees by key, children before parents.
std::vector<RaTree> subtrees(const RaTree& t);
int recompute_height(const RaTree& t);
std::size_t tree_size(const RaTree& t);

}  // namespace mtsql::sql
