#include "mtsql/sql/clauses.hpp"

#include <algorithm>
#include <set>

namespace mtsql::sql {

namespace {

std::string col_key(const ColUnit& c) {
  std::string out(agg_name(c.agg));
  out += "(";
  if (c.distinct) out += "distinct ";
  out += c.star() ? "*" : "c" + std::to_string(c.column);
  return out + ")";
}

std::string val_key(const ValUnit& v) {
  std::string out = col_key(v.left);
  if (v.op != Arith::None) out += std::string(arith_symbol(v.op)) + col_key(v.right);
  return out;
}

std::string operand_key(const Operand& o) {
  switch (o.kind) {
    case Operand::Kind::Literal: return "'" + normalize_literal(o.literal) + "'";
    case Operand::Kind::Column: return col_key(o.column);
    case Operand::Kind::Subquery: return "{" + decompose_clauses(*o.subquery).to_string() + "}";
  }
  return "";
}

std::string pred_key(const Predicate& p, bool symmetric_eq) {
  std::string lhs = val_key(p.lhs);
  std::string rhs = operand_key(p.rhs);
  if (symmetric_eq && p.op == Cmp::Eq && p.lhs.op == Arith::None && p.rhs.kind == Operand::Kind::Column &&
      rhs < lhs) {
    std::swap(lhs, rhs);
  }
  std::string out = (p.negated ? "not " : "") + lhs + " " + std::string(cmp_symbol(p.op)) + " " + rhs;
  if (p.rhs2) out += " and " + operand_key(*p.rhs2);
  return out;
}

std::string bool_key(const BoolExpr& e) {
  if (e.kind == BoolExpr::Kind::Pred) return pred_key(e.pred, false);
  std::vector<std::string> parts;
  for (const auto& c : e.children) parts.push_back(bool_key(c));
  std::sort(parts.begin(), parts.end());
  std::string out = e.kind == BoolExpr::Kind::And ? "and[" : "or[";
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "; ";
    out += parts[i];
  }
  return out + "]";
}

std::vector<std::string> conjuncts(const std::optional<BoolExpr>& e) {
  std::vector<std::string> out;
  if (!e) return out;
  if (e->kind == BoolExpr::Kind::And) {
    for (const auto& c : e->children) out.push_back(bool_key(c));
  } else {
    out.push_back(bool_key(*e));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += v[i];
  }
  return out;
}

}  // namespace

bool ClauseSets::operator==(const ClauseSets& o) const {
  if (distinct != o.distinct || select != o.select || from_tables != o.from_tables ||
      join_conds != o.join_conds || where != o.where || group_by != o.group_by || having != o.having ||
      order != o.order || limit != o.limit || set_op != o.set_op) {
    return false;
  }
  if (!set_rhs || !o.set_rhs) return !set_rhs && !o.set_rhs;
  return *set_rhs == *o.set_rhs;
}

std::string ClauseSets::to_string() const {
  std::string out = "select" + std::string(distinct ? " distinct" : "") + "[" + join(select) + "]";
  out += " from[" + join(from_tables) + "]";
  if (!join_conds.empty()) out += " on[" + join(join_conds) + "]";
  if (!where.empty()) out += " where[" + join(where) + "]";
  if (!group_by.empty()) out += " group[" + join(group_by) + "]";
  if (!having.empty()) out += " having[" + join(having) + "]";
  if (!order.empty()) out += " order[" + order + "]";
  if (!limit.empty()) out += " limit[" + limit + "]";
  if (set_rhs) out += " " + set_op + "{" + set_rhs->to_string() + "}";
  return out;
}

ClauseSets decompose_clauses(const Query& q) {
  ClauseSets c;
  c.distinct = q.distinct;
  for (const auto& item : q.select) c.select.push_back(std::string(agg_name(item.agg)) + "<" + val_key(item.val) + ">");
  std::sort(c.select.begin(), c.select.end());
  for (const auto& t : q.from.tables) {
    c.from_tables.push_back(t.sub ? "{" + decompose_clauses(*t.sub).to_string() + "}" : "t" + std::to_string(t.table));
  }
  std::sort(c.from_tables.begin(), c.from_tables.end());
  for (const auto& p : q.from.joins) c.join_conds.push_back(pred_key(p, true));
  std::sort(c.join_conds.begin(), c.join_conds.end());
  c.join_conds.erase(std::unique(c.join_conds.begin(), c.join_conds.end()), c.join_conds.end());
  c.where = conjuncts(q.where);
  for (const auto& g : q.group_by) c.group_by.push_back(col_key(g));
  std::sort(c.group_by.begin(), c.group_by.end());
  c.group_by.erase(std::unique(c.group_by.begin(), c.group_by.end()), c.group_by.end());
  c.having = conjuncts(q.having);
  if (q.order) {
    std::vector<std::string> keys;
    for (const auto& k : q.order->keys) keys.push_back(val_key(k));
    c.order = std::string(q.order->desc ? "desc " : "asc ") + join(keys);
  }
  if (q.limit) c.limit = std::to_string(*q.limit);
  if (q.set_op != SetOp::None && q.set_rhs) {
    c.set_op = std::string(set_op_name(q.set_op));
    c.set_rhs = std::make_shared<ClauseSets>(decompose_clauses(*q.set_rhs));
  }
  return c;
}

}  // namespace mtsql::sql
