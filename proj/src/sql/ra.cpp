#include "mtsql/sql/ra.hpp"

#include <array>
#include <charconv>
#include <functional>
#include <set>
#include <unordered_set>

namespace mtsql::sql {

namespace {

constexpr std::array<std::string_view, kRaOpCount> kNames{
    "table", "column", "star", "value", "count", "sum", "avg", "min", "max", "distinct", "derived",
    "not", "plus", "minus", "times", "div", "list", "eq", "neq", "lt", "gt", "le", "ge", "like",
    "not_like", "in", "not_in", "between", "not_between", "pair", "and", "or", "product", "on",
    "selection", "group_by", "having", "projection", "project_distinct", "order_asc", "order_desc",
    "limit", "union", "intersect", "except"};

// LIMIT takes a plain non-negative integer.
std::optional<long long> limit_count(const Literal& lit) {
  long long v = 0;
  const auto& t = lit.text;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (lit.is_string || t.empty() || ec != std::errc() || p != t.data() + t.size() || v < 0) return std::nullopt;
  return v;
}

bool is_agg(RaOp op) {
  return op == RaOp::Count || op == RaOp::Sum || op == RaOp::Avg || op == RaOp::Min || op == RaOp::Max;
}
bool is_arith(RaOp op) {
  return op == RaOp::Plus || op == RaOp::Minus || op == RaOp::Times || op == RaOp::Div;
}
bool is_cmp(RaOp op) {
  switch (op) {
    case RaOp::Eq: case RaOp::Neq: case RaOp::Lt: case RaOp::Gt: case RaOp::Le: case RaOp::Ge:
    case RaOp::Like: case RaOp::NotLike: case RaOp::In: case RaOp::NotIn:
      return true;
    default:
      return false;
  }
}
bool is_setop(RaOp op) { return op == RaOp::Union || op == RaOp::Intersect || op == RaOp::Except; }
bool is_projection(RaOp op) { return op == RaOp::Projection || op == RaOp::ProjectDistinct; }

// A Spider column unit: column, DISTINCT column, or an aggregate over one.
bool is_col_unit(const RaNode* n) {
  if (n->op == RaOp::Column) return true;
  if (n->op == RaOp::Distinct) return true;
  if (is_agg(n->op)) return true;
  return n->op == RaOp::Star;
}

RaTree finish(RaNode n) {
  int h = 0;
  n.key = std::string(kNames[static_cast<std::size_t>(n.op)]);
  if (!n.kids.empty()) {
    n.key += "(";
    for (std::size_t i = 0; i < n.kids.size(); ++i) {
      if (i) n.key += ",";
      n.key += n.kids[i]->key;
      h = std::max(h, n.kids[i]->height + 1);
    }
    n.key += ")";
  }
  n.height = h;
  return std::make_shared<const RaNode>(std::move(n));
}

}  // namespace

std::string_view ra_op_name(RaOp op) { return kNames[static_cast<std::size_t>(op)]; }

bool is_leaf_op(RaOp op) { return op == RaOp::Table || op == RaOp::Column || op == RaOp::Star || op == RaOp::Value; }

int ra_arity(RaOp op) {
  if (is_leaf_op(op)) return 0;
  if (is_agg(op) || op == RaOp::Distinct || op == RaOp::Derived || op == RaOp::Not) return 1;
  return 2;
}

bool is_complete(Sort s) {
  return s == Sort::Query || s == Sort::Ordered || s == Sort::Limited || s == Sort::SetQuery;
}

RaTree ra_table(int table) {
  RaNode n{RaOp::Table, {}, table, {}, Sort::Rel, 0, "t" + std::to_string(table)};
  return std::make_shared<const RaNode>(std::move(n));
}

RaTree ra_column(int column) {
  RaNode n{RaOp::Column, {}, column, {}, Sort::Col, 0, "c" + std::to_string(column)};
  return std::make_shared<const RaNode>(std::move(n));
}

RaTree ra_star() { return std::make_shared<const RaNode>(RaNode{RaOp::Star, {}, -1, {}, Sort::Star, 0, "*"}); }

RaTree ra_value(Literal lit) {
  std::string key = "'" + normalize_literal(lit) + "'";
  return std::make_shared<const RaNode>(RaNode{RaOp::Value, {}, -1, std::move(lit), Sort::Val, 0, std::move(key)});
}

std::optional<Sort> result_sort(RaOp op, const RaNode* a, const RaNode* b) {
  using S = Sort;
  const int arity = ra_arity(op);
  if (arity == 0) return std::nullopt;
  if ((arity == 1) != (b == nullptr)) return std::nullopt;
  const S sa = a->sort;
  if (arity == 1) {
    switch (op) {
      case RaOp::Count:
        if (a->op == RaOp::Column || a->op == RaOp::Star || a->op == RaOp::Distinct) return S::Agg;
        return std::nullopt;
      case RaOp::Sum: case RaOp::Avg: case RaOp::Min: case RaOp::Max:
        if (a->op == RaOp::Column || a->op == RaOp::Distinct) return S::Agg;
        return std::nullopt;
      case RaOp::Distinct:
        if (a->op == RaOp::Column) return S::Col;
        return std::nullopt;
      case RaOp::Derived:
        if (is_complete(sa)) return S::Rel;
        return std::nullopt;
      case RaOp::Not:
        if (sa == S::Pred && a->op != RaOp::Not) return S::Pred;
        return std::nullopt;
      default:
        return std::nullopt;
    }
  }
  const S sb = b->sort;
  auto col_or_agg = [](S s) { return s == S::Col || s == S::Agg; };
  if (is_arith(op)) {
    if (!is_col_unit(a) || !is_col_unit(b) || a->op == RaOp::Star || b->op == RaOp::Star) return std::nullopt;
    return (sa == S::Agg || sb == S::Agg) ? S::Agg : S::Col;
  }
  if (is_cmp(op)) {
    if (!col_or_agg(sa)) return std::nullopt;
    if (op == RaOp::In || op == RaOp::NotIn) {
      if (is_complete(sb) || sb == S::Val) return S::Pred;
      return std::nullopt;
    }
    if (sb == S::Val || col_or_agg(sb) || is_complete(sb)) return S::Pred;
    return std::nullopt;
  }
  switch (op) {
    case RaOp::ExprList:
      if ((col_or_agg(sa) || sa == S::Star || sa == S::List) && (col_or_agg(sb) || sb == S::Star)) return S::List;
      return std::nullopt;
    case RaOp::Between: case RaOp::NotBetween:
      if (col_or_agg(sa) && sb == S::Pair) return S::Pred;
      return std::nullopt;
    case RaOp::ValPair:
      if (sa == S::Val && sb == S::Val) return S::Pair;
      return std::nullopt;
    case RaOp::And: case RaOp::Or:
      // Left-deep chains: the right operand never repeats the same connective.
      if (sa == S::Pred && sb == S::Pred && b->op != op) return S::Pred;
      return std::nullopt;
    case RaOp::Product:
      if ((a->op == RaOp::Table || a->op == RaOp::Derived || a->op == RaOp::Product) &&
          (b->op == RaOp::Table || b->op == RaOp::Derived))
        return S::Rel;
      return std::nullopt;
    case RaOp::On:
      if (sa == S::Pred && b->op == RaOp::Product) return S::Rel;
      return std::nullopt;
    case RaOp::Selection:
      if (sa == S::Pred && sb == S::Rel) return S::Filtered;
      return std::nullopt;
    case RaOp::GroupBy:
      if ((sa == S::Col || sa == S::List) && (sb == S::Rel || sb == S::Filtered)) return S::Grouped;
      return std::nullopt;
    case RaOp::Having:
      if (sa == S::Pred && sb == S::Grouped) return S::HavingRel;
      return std::nullopt;
    case RaOp::Projection: case RaOp::ProjectDistinct:
      if ((col_or_agg(sa) || sa == S::Star || sa == S::List) &&
          (sb == S::Rel || sb == S::Filtered || sb == S::Grouped || sb == S::HavingRel))
        return S::Query;
      return std::nullopt;
    case RaOp::OrderAsc: case RaOp::OrderDesc:
      if (sa == S::Query && (col_or_agg(sb) || sb == S::List)) return S::Ordered;
      return std::nullopt;
    case RaOp::Limit:
      if ((sa == S::Query || sa == S::Ordered) && sb == S::Val && b->op == RaOp::Value && limit_count(b->literal)) {
        return S::Limited;
      }
      return std::nullopt;
    case RaOp::Union: case RaOp::Intersect: case RaOp::Except:
      if ((sa == S::Query || sa == S::Ordered || sa == S::Limited) && is_complete(sb)) return S::SetQuery;
      return std::nullopt;
    default:
      return std::nullopt;
  }
}

std::optional<Sort> result_sort(RaOp op, const std::vector<RaTree>& kids) {
  if (static_cast<int>(kids.size()) != ra_arity(op)) return std::nullopt;
  if (kids.empty()) return std::nullopt;
  return result_sort(op, kids[0].get(), kids.size() > 1 ? kids[1].get() : nullptr);
}

RaTree ra_node(RaOp op, std::vector<RaTree> kids) {
  auto s = result_sort(op, kids);
  if (!s) {
    std::string msg = "ill-typed " + std::string(ra_op_name(op)) + " over (";
    for (std::size_t i = 0; i < kids.size(); ++i) msg += (i ? ", " : "") + kids[i]->key;
    throw RaError(msg + ")");
  }
  RaNode n;
  n.op = op;
  n.kids = std::move(kids);
  n.sort = *s;
  return finish(std::move(n));
}

// ---- lowering -------------------------------------------------------------

namespace {

RaTree lower_col(const ColUnit& c) {
  RaTree base = c.star() ? ra_star() : ra_column(c.column);
  if (c.distinct) base = ra_node(RaOp::Distinct, {base});
  switch (c.agg) {
    case Agg::None: return base;
    case Agg::Count: return ra_node(RaOp::Count, {base});
    case Agg::Sum: return ra_node(RaOp::Sum, {base});
    case Agg::Avg: return ra_node(RaOp::Avg, {base});
    case Agg::Min: return ra_node(RaOp::Min, {base});
    case Agg::Max: return ra_node(RaOp::Max, {base});
  }
  return base;
}

RaOp arith_op(Arith a) {
  switch (a) {
    case Arith::Plus: return RaOp::Plus;
    case Arith::Minus: return RaOp::Minus;
    case Arith::Times: return RaOp::Times;
    default: return RaOp::Div;
  }
}

RaTree lower_val(const ValUnit& v) {
  if (v.op == Arith::None) return lower_col(v.left);
  return ra_node(arith_op(v.op), {lower_col(v.left), lower_col(v.right)});
}

RaTree lower_select_item(const SelectItem& item) {
  if (item.agg == Agg::None) return lower_val(item.val);
  if (item.val.op != Arith::None) throw RaError("aggregate over arithmetic is outside the tree grammar");
  ColUnit c = item.val.left;
  c.agg = item.agg;
  return lower_col(c);
}

RaTree left_deep(RaOp op, std::vector<RaTree> items) {
  RaTree acc = items.at(0);
  for (std::size_t i = 1; i < items.size(); ++i) acc = ra_node(op, {acc, items[i]});
  return acc;
}

RaTree lower_operand(const Operand& o) {
  switch (o.kind) {
    case Operand::Kind::Literal: return ra_value(o.literal);
    case Operand::Kind::Column: return lower_col(o.column);
    case Operand::Kind::Subquery: return to_relational_algebra(*o.subquery);
  }
  return nullptr;
}

RaTree lower_pred(const Predicate& p) {
  RaTree lhs = lower_val(p.lhs);
  if (p.op == Cmp::Between) {
    if (!p.rhs2) throw RaError("BETWEEN without upper bound");
    RaTree pair = ra_node(RaOp::ValPair, {lower_operand(p.rhs), lower_operand(*p.rhs2)});
    return ra_node(p.negated ? RaOp::NotBetween : RaOp::Between, {lhs, pair});
  }
  RaOp op;
  bool wrap_not = false;
  switch (p.op) {
    case Cmp::Eq: op = RaOp::Eq; break;
    case Cmp::Neq: op = RaOp::Neq; break;
    case Cmp::Lt: op = RaOp::Lt; break;
    case Cmp::Gt: op = RaOp::Gt; break;
    case Cmp::Le: op = RaOp::Le; break;
    case Cmp::Ge: op = RaOp::Ge; break;
    case Cmp::In: op = p.negated ? RaOp::NotIn : RaOp::In; break;
    case Cmp::Like: op = p.negated ? RaOp::NotLike : RaOp::Like; break;
    default: op = RaOp::Eq;
  }
  if (p.negated && p.op != Cmp::In && p.op != Cmp::Like) wrap_not = true;
  RaTree node = ra_node(op, {lhs, lower_operand(p.rhs)});
  return wrap_not ? ra_node(RaOp::Not, {node}) : node;
}

RaTree lower_bool(const BoolExpr& e) {
  if (e.kind == BoolExpr::Kind::Pred) return lower_pred(e.pred);
  std::vector<RaTree> kids;
  for (const auto& c : e.children) kids.push_back(lower_bool(c));
  return left_deep(e.kind == BoolExpr::Kind::And ? RaOp::And : RaOp::Or, std::move(kids));
}

RaTree lower_core(const Query& q) {
  std::vector<RaTree> units;
  for (const auto& t : q.from.tables) {
    units.push_back(t.sub ? ra_node(RaOp::Derived, {to_relational_algebra(*t.sub)}) : ra_table(t.table));
  }
  RaTree rel = left_deep(RaOp::Product, units);
  if (!q.from.joins.empty()) {
    if (units.size() < 2) throw RaError("join condition without a second table");
    std::vector<RaTree> preds;
    for (const auto& p : q.from.joins) preds.push_back(lower_pred(p));
    rel = ra_node(RaOp::On, {left_deep(RaOp::And, preds), rel});
  }
  if (q.where) rel = ra_node(RaOp::Selection, {lower_bool(*q.where), rel});
  if (!q.group_by.empty()) {
    std::vector<RaTree> keys;
    for (const auto& g : q.group_by) keys.push_back(lower_col(g));
    rel = ra_node(RaOp::GroupBy, {left_deep(RaOp::ExprList, keys), rel});
    if (q.having) rel = ra_node(RaOp::Having, {lower_bool(*q.having), rel});
  } else if (q.having) {
    throw RaError("HAVING without GROUP BY is outside the tree grammar");
  }
  std::vector<RaTree> items;
  for (const auto& item : q.select) items.push_back(lower_select_item(item));
  RaTree out = ra_node(q.distinct ? RaOp::ProjectDistinct : RaOp::Projection, {left_deep(RaOp::ExprList, items), rel});
  if (q.order) {
    std::vector<RaTree> keys;
    for (const auto& k : q.order->keys) keys.push_back(lower_val(k));
    out = ra_node(q.order->desc ? RaOp::OrderDesc : RaOp::OrderAsc, {out, left_deep(RaOp::ExprList, keys)});
  }
  if (q.limit) out = ra_node(RaOp::Limit, {out, ra_value({std::to_string(*q.limit), false})});
  return out;
}

}  // namespace

RaTree to_relational_algebra(const Query& q) {
  RaTree core = lower_core(q);
  if (q.set_op == SetOp::None || !q.set_rhs) return core;
  RaOp op = q.set_op == SetOp::Union ? RaOp::Union : q.set_op == SetOp::Intersect ? RaOp::Intersect : RaOp::Except;
  return ra_node(op, {core, to_relational_algebra(*q.set_rhs)});
}

// ---- lifting --------------------------------------------------------------

namespace {

[[noreturn]] void bad(const RaTree& t, const char* what) {
  throw RaError(std::string(what) + ": " + t->key);
}

std::vector<RaTree> unlist(const RaTree& t, RaOp op) {
  std::vector<RaTree> out;
  std::function<void(const RaTree&)> go = [&](const RaTree& n) {
    if (n->op == op) {
      go(n->kids[0]);
      go(n->kids[1]);
    } else {
      out.push_back(n);
    }
  };
  go(t);
  return out;
}

Agg agg_of(RaOp op) {
  switch (op) {
    case RaOp::Count: return Agg::Count;
    case RaOp::Sum: return Agg::Sum;
    case RaOp::Avg: return Agg::Avg;
    case RaOp::Min: return Agg::Min;
    case RaOp::Max: return Agg::Max;
    default: return Agg::None;
  }
}

class Lifter {
 public:
  explicit Lifter(const schema::SchemaGraph& s) : s_(s) {}

  QueryPtr query(const RaTree& t) {
    if (is_setop(t->op)) {
      auto q = core(t->kids[0]);
      q->set_op = t->op == RaOp::Union ? SetOp::Union : t->op == RaOp::Intersect ? SetOp::Intersect : SetOp::Except;
      q->set_rhs = query(t->kids[1]);
      return q;
    }
    return core(t);
  }

 private:
  const schema::SchemaGraph& s_;
  std::vector<const Query*> scopes_;

  int source_of(int column) const {
    if (column < 0 || scopes_.empty()) return -1;
    const auto& from = scopes_.back()->from.tables;
    for (std::size_t k = 0; k < from.size(); ++k)
      if (!from[k].sub && from[k].table == s_.columns[column].table) return static_cast<int>(k);
    return -1;
  }

  ColUnit col(const RaTree& t) {
    ColUnit c;
    RaTree n = t;
    if (is_agg(n->op)) {
      c.agg = agg_of(n->op);
      n = n->kids[0];
    }
    if (n->op == RaOp::Distinct) {
      c.distinct = true;
      n = n->kids[0];
    }
    if (n->op == RaOp::Star) {
      c.column = -1;
    } else if (n->op == RaOp::Column) {
      c.column = n->ref;
      c.source = source_of(n->ref);
    } else {
      bad(t, "expected a column unit");
    }
    return c;
  }

  ValUnit val(const RaTree& t) {
    ValUnit v;
    if (is_arith(t->op)) {
      v.op = t->op == RaOp::Plus ? Arith::Plus : t->op == RaOp::Minus ? Arith::Minus
             : t->op == RaOp::Times ? Arith::Times : Arith::Div;
      v.left = col(t->kids[0]);
      v.right = col(t->kids[1]);
    } else {
      v.left = col(t);
    }
    return v;
  }

  Operand operand(const RaTree& t) {
    Operand o;
    if (t->op == RaOp::Value) {
      o.literal = t->literal;
    } else if (is_complete(t->sort)) {
      o.kind = Operand::Kind::Subquery;
      o.subquery = query(t);
    } else {
      o.kind = Operand::Kind::Column;
      o.column = col(t);
    }
    return o;
  }

  Predicate pred(const RaTree& t) {
    Predicate p;
    RaTree n = t;
    if (n->op == RaOp::Not) {
      p.negated = true;
      n = n->kids[0];
    }
    p.lhs = val(n->kids[0]);
    switch (n->op) {
      case RaOp::Eq: p.op = Cmp::Eq; break;
      case RaOp::Neq: p.op = Cmp::Neq; break;
      case RaOp::Lt: p.op = Cmp::Lt; break;
      case RaOp::Gt: p.op = Cmp::Gt; break;
      case RaOp::Le: p.op = Cmp::Le; break;
      case RaOp::Ge: p.op = Cmp::Ge; break;
      case RaOp::Like: p.op = Cmp::Like; break;
      case RaOp::NotLike: p.op = Cmp::Like; p.negated = true; break;
      case RaOp::In: p.op = Cmp::In; break;
      case RaOp::NotIn: p.op = Cmp::In; p.negated = true; break;
      case RaOp::Between: case RaOp::NotBetween:
        p.op = Cmp::Between;
        p.negated = n->op == RaOp::NotBetween;
        p.rhs = operand(n->kids[1]->kids[0]);
        p.rhs2 = operand(n->kids[1]->kids[1]);
        return p;
      default:
        bad(t, "expected a predicate");
    }
    p.rhs = operand(n->kids[1]);
    return p;
  }

  BoolExpr boolean(const RaTree& t) {
    BoolExpr e;
    if (t->op == RaOp::And || t->op == RaOp::Or) {
      e.kind = t->op == RaOp::And ? BoolExpr::Kind::And : BoolExpr::Kind::Or;
      for (const auto& k : unlist(t, t->op)) e.children.push_back(boolean(k));
      return e;
    }
    e.pred = pred(t);
    return e;
  }

  QueryPtr core(const RaTree& t) {
    auto q = std::make_shared<Query>();
    RaTree n = t;
    if (n->op == RaOp::Limit) {
      auto count = limit_count(n->kids[1]->literal);
      if (!count) throw RaError("lift: LIMIT needs an integer literal");
      q->limit = *count;
      n = n->kids[0];
    }
    RaTree order_keys;
    if (n->op == RaOp::OrderAsc || n->op == RaOp::OrderDesc) {
      q->order = OrderBy{n->op == RaOp::OrderDesc, {}};
      order_keys = n->kids[1];
      n = n->kids[0];
    }
    if (!is_projection(n->op)) bad(t, "expected a projection");
    q->distinct = n->op == RaOp::ProjectDistinct;
    RaTree items = n->kids[0];
    RaTree rel = n->kids[1];
    RaTree where, group, having;
    if (rel->op == RaOp::Having) {
      having = rel->kids[0];
      rel = rel->kids[1];
    }
    if (rel->op == RaOp::GroupBy) {
      group = rel->kids[0];
      rel = rel->kids[1];
    }
    if (rel->op == RaOp::Selection) {
      where = rel->kids[0];
      rel = rel->kids[1];
    }
    RaTree joins;
    if (rel->op == RaOp::On) {
      joins = rel->kids[0];
      rel = rel->kids[1];
    }
    for (const auto& u : unlist(rel, RaOp::Product)) {
      TableUnit tu;
      if (u->op == RaOp::Table) tu.table = u->ref;
      else if (u->op == RaOp::Derived) tu.sub = query(u->kids[0]);
      else bad(u, "expected a table");
      q->from.tables.push_back(std::move(tu));
    }
    scopes_.push_back(q.get());
    if (joins)
      for (const auto& p : unlist(joins, RaOp::And)) q->from.joins.push_back(pred(p));
    for (const auto& item : unlist(items, RaOp::ExprList)) {
      SelectItem si;
      if (is_agg(item->op)) {
        si.agg = agg_of(item->op);
        si.val.left = col(item->kids[0]);
      } else {
        si.val = val(item);
      }
      q->select.push_back(si);
    }
    if (where) q->where = boolean(where);
    if (group)
      for (const auto& g : unlist(group, RaOp::ExprList)) q->group_by.push_back(col(g));
    if (having) q->having = boolean(having);
    if (order_keys)
      for (const auto& k : unlist(order_keys, RaOp::ExprList)) q->order->keys.push_back(val(k));
    scopes_.pop_back();
    return q;
  }
};

}  // namespace

QueryPtr lift_query(const RaTree& t, const schema::SchemaGraph& schema) {
  if (!t || !is_complete(t->sort)) throw RaError("tree is not a complete query");
  return Lifter(schema).query(t);
}

std::string render_sql(const RaTree& t, const schema::SchemaGraph& schema) {
  return to_sql(*lift_query(t, schema), schema);
}

std::vector<RaTree> subtrees(const RaTree& t) {
  std::vector<RaTree> out;
  std::unordered_set<std::string> seen;
  std::function<void(const RaTree&)> go = [&](const RaTree& n) {
    for (const auto& k : n->kids) go(k);
    if (seen.insert(n->key).second) out.push_back(n);
  };
  go(t);
  return out;
}

int recompute_height(const RaTree& t) {
  int h = 0;
  for (const auto& k : t->kids) h = std::max(h, recompute_height(k) + 1);
  return h;
}

std::size_t tree_size(const RaTree& t) {
  std::size_t n = 1;
  for (const auto& k : t->kids) n += tree_size(k);
  return n;
}

}  // namespace mtsql::sql
