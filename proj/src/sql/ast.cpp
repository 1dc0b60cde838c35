#include <algorithm>

#include "mtsql/sql/ast.hpp"

namespace mtsql::sql {

using nlohmann::json;

namespace {

class Printer {
 public:
  explicit Printer(const schema::SchemaGraph& s) : s_(s) {}

  std::string query(const Query& q) {
    std::string out = core(q);
    if (q.set_op != SetOp::None && q.set_rhs) {
      out += " " + std::string(set_op_name(q.set_op)) + " " + query(*q.set_rhs);
    }
    return out;
  }

 private:
  const schema::SchemaGraph& s_;
  const Query* cur_ = nullptr;

  bool aliased() const { return cur_ && cur_->from.tables.size() > 1; }

  std::string column(const ColUnit& c) {
    const auto& from = cur_->from.tables;
    if (c.star()) {
      return "*";
    }
    const auto& col = s_.columns[c.column];
    int src = c.source;
    if (src < 0 || src >= static_cast<int>(from.size())) {
      src = -1;
      for (std::size_t k = 0; k < from.size(); ++k) {
        if (from[k].table == col.table) {
          src = static_cast<int>(k);
          break;
        }
      }
    }
    if (src < 0) return s_.tables[col.table].original + "." + col.original;
    if (aliased()) return "T" + std::to_string(src + 1) + "." + col.original;
    if (from[src].table != col.table && !from[src].sub) return s_.tables[col.table].original + "." + col.original;
    return col.original;
  }

  std::string col_unit(const ColUnit& c) {
    std::string inner = (c.distinct ? "DISTINCT " : "") + column(c);
    if (c.agg == Agg::None) return inner;
    return std::string(agg_name(c.agg)) + "(" + inner + ")";
  }

  std::string val_unit(const ValUnit& v) {
    std::string out = col_unit(v.left);
    if (v.op != Arith::None) out += " " + std::string(arith_symbol(v.op)) + " " + col_unit(v.right);
    return out;
  }

  std::string literal(const Literal& l) {
    if (!l.is_string) return l.text;
    std::string out = "\"";
    for (char c : l.text) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  }

  std::string operand(const Operand& o) {
    switch (o.kind) {
      case Operand::Kind::Literal: return literal(o.literal);
      case Operand::Kind::Column: return col_unit(o.column);
      case Operand::Kind::Subquery: {
        const Query* save = cur_;
        std::string out = "(" + query(*o.subquery) + ")";
        cur_ = save;
        return out;
      }
    }
    return "";
  }

  std::string predicate(const Predicate& p) {
    std::string out = val_unit(p.lhs) + " ";
    if (p.negated) out += "NOT ";
    out += std::string(cmp_symbol(p.op)) + " " + operand(p.rhs);
    if (p.op == Cmp::Between && p.rhs2) out += " AND " + operand(*p.rhs2);
    return out;
  }

  std::string boolean(const BoolExpr& e, bool nested) {
    if (e.kind == BoolExpr::Kind::Pred) return predicate(e.pred);
    const char* sep = e.kind == BoolExpr::Kind::And ? " AND " : " OR ";
    std::string out;
    for (std::size_t i = 0; i < e.children.size(); ++i) {
      if (i) out += sep;
      out += boolean(e.children[i], true);
    }
    if (nested) return "(" + out + ")";
    return out;
  }

  std::string core(const Query& q) {
    const Query* save = cur_;
    cur_ = &q;
    std::string out = "SELECT ";
    if (q.distinct) out += "DISTINCT ";
    for (std::size_t i = 0; i < q.select.size(); ++i) {
      if (i) out += ", ";
      const auto& item = q.select[i];
      if (item.agg == Agg::None) {
        out += val_unit(item.val);
      } else {
        out += std::string(agg_name(item.agg)) + "(" + val_unit(item.val) + ")";
      }
    }
    out += " FROM ";
    const auto& from = q.from.tables;
    for (std::size_t k = 0; k < from.size(); ++k) {
      if (k) out += " JOIN ";
      if (from[k].sub) {
        out += "(" + query(*from[k].sub) + ")";
        cur_ = &q;
      } else {
        out += s_.tables[from[k].table].original;
      }
      if (aliased()) out += " AS T" + std::to_string(k + 1);
    }
    if (!q.from.joins.empty()) {
      out += " ON ";
      for (std::size_t j = 0; j < q.from.joins.size(); ++j) {
        if (j) out += " AND ";
        out += predicate(q.from.joins[j]);
      }
    }
    if (q.where) out += " WHERE " + boolean(*q.where, false);
    if (!q.group_by.empty()) {
      out += " GROUP BY ";
      for (std::size_t i = 0; i < q.group_by.size(); ++i) {
        if (i) out += ", ";
        out += col_unit(q.group_by[i]);
      }
    }
    if (q.having) out += " HAVING " + boolean(*q.having, false);
    if (q.order) {
      out += " ORDER BY ";
      for (std::size_t i = 0; i < q.order->keys.size(); ++i) {
        if (i) out += ", ";
        out += val_unit(q.order->keys[i]);
      }
      out += q.order->desc ? " DESC" : " ASC";
    }
    if (q.limit) out += " LIMIT " + std::to_string(*q.limit);
    cur_ = save;
    return out;
  }
};

json col_json(const ColUnit& c, const schema::SchemaGraph& s) {
  json j;
  j["agg"] = std::string(agg_name(c.agg));
  j["column"] = c.star() ? std::string("*") : s.qualified(c.column);
  j["distinct"] = c.distinct;
  return j;
}

json val_json(const ValUnit& v, const schema::SchemaGraph& s) {
  json j;
  j["op"] = std::string(arith_symbol(v.op));
  j["left"] = col_json(v.left, s);
  if (v.op != Arith::None) j["right"] = col_json(v.right, s);
  return j;
}

json operand_json(const Operand& o, const schema::SchemaGraph& s) {
  switch (o.kind) {
    case Operand::Kind::Literal: return json{{"literal", o.literal.text}, {"string", o.literal.is_string}};
    case Operand::Kind::Column: return json{{"column", col_json(o.column, s)}};
    case Operand::Kind::Subquery: return json{{"subquery", to_json(*o.subquery, s)}};
  }
  return nullptr;
}

json pred_json(const Predicate& p, const schema::SchemaGraph& s) {
  json j{{"not", p.negated}, {"op", std::string(cmp_symbol(p.op))}, {"lhs", val_json(p.lhs, s)},
         {"rhs", operand_json(p.rhs, s)}};
  if (p.rhs2) j["rhs2"] = operand_json(*p.rhs2, s);
  return j;
}

json bool_json(const BoolExpr& e, const schema::SchemaGraph& s) {
  if (e.kind == BoolExpr::Kind::Pred) return pred_json(e.pred, s);
  json kids = json::array();
  for (const auto& c : e.children) kids.push_back(bool_json(c, s));
  return json{{e.kind == BoolExpr::Kind::And ? "and" : "or", kids}};
}

void collect_col(const ColUnit& c, std::vector<int>& columns) {
  if (!c.star()) columns.push_back(c.column);
}

void collect_val(const ValUnit& v, std::vector<int>& columns) {
  collect_col(v.left, columns);
  if (v.op != Arith::None) collect_col(v.right, columns);
}

void collect_pred(const Predicate& p, std::vector<int>& tables, std::vector<int>& columns) {
  collect_val(p.lhs, columns);
  for (const Operand* o : {&p.rhs, p.rhs2 ? &*p.rhs2 : nullptr}) {
    if (!o) continue;
    if (o->kind == Operand::Kind::Column) collect_col(o->column, columns);
    if (o->kind == Operand::Kind::Subquery) collect_schema_refs(*o->subquery, tables, columns);
  }
}

void collect_bool(const BoolExpr& e, std::vector<int>& tables, std::vector<int>& columns) {
  if (e.kind == BoolExpr::Kind::Pred) return collect_pred(e.pred, tables, columns);
  for (const auto& c : e.children) collect_bool(c, tables, columns);
}

bool bool_has_join(const BoolExpr& e);

bool pred_has_join(const Predicate& p) {
  for (const Operand* o : {&p.rhs, p.rhs2 ? &*p.rhs2 : nullptr}) {
    if (o && o->kind == Operand::Kind::Subquery && has_join(*o->subquery)) return true;
  }
  return false;
}

bool bool_has_join(const BoolExpr& e) {
  if (e.kind == BoolExpr::Kind::Pred) return pred_has_join(e.pred);
  return std::any_of(e.children.begin(), e.children.end(), bool_has_join);
}

}  // namespace

std::string to_sql(const Query& q, const schema::SchemaGraph& schema) { return Printer(schema).query(q); }

json to_json(const Query& q, const schema::SchemaGraph& s) {
  json j;
  j["distinct"] = q.distinct;
  json sel = json::array();
  for (const auto& item : q.select) sel.push_back({{"agg", std::string(agg_name(item.agg))}, {"val", val_json(item.val, s)}});
  j["select"] = sel;
  json from = json::array();
  for (const auto& t : q.from.tables) {
    if (t.sub) from.push_back({{"subquery", to_json(*t.sub, s)}});
    else from.push_back(s.tables[t.table].name);
  }
  j["from"] = from;
  json joins = json::array();
  for (const auto& p : q.from.joins) joins.push_back(pred_json(p, s));
  j["joins"] = joins;
  if (q.where) j["where"] = bool_json(*q.where, s);
  json group = json::array();
  for (const auto& c : q.group_by) group.push_back(col_json(c, s));
  j["group_by"] = group;
  if (q.having) j["having"] = bool_json(*q.having, s);
  if (q.order) {
    json keys = json::array();
    for (const auto& k : q.order->keys) keys.push_back(val_json(k, s));
    j["order_by"] = {{"desc", q.order->desc}, {"keys", keys}};
  }
  if (q.limit) j["limit"] = *q.limit;
  if (q.set_op != SetOp::None) {
    j["set_op"] = std::string(set_op_name(q.set_op));
    j["set_rhs"] = to_json(*q.set_rhs, s);
  }
  return j;
}

void collect_schema_refs(const Query& q, std::vector<int>& tables, std::vector<int>& columns) {
  for (const auto& item : q.select) collect_val(item.val, columns);
  for (const auto& t : q.from.tables) {
    if (t.sub) collect_schema_refs(*t.sub, tables, columns);
    else tables.push_back(t.table);
  }
  for (const auto& p : q.from.joins) collect_pred(p, tables, columns);
  if (q.where) collect_bool(*q.where, tables, columns);
  for (const auto& c : q.group_by) collect_col(c, columns);
  if (q.having) collect_bool(*q.having, tables, columns);
  if (q.order)
    for (const auto& k : q.order->keys) collect_val(k, columns);
  if (q.set_rhs) collect_schema_refs(*q.set_rhs, tables, columns);
}

bool has_join(const Query& q) {
  if (q.from.tables.size() > 1) return true;
  for (const auto& t : q.from.tables)
    if (t.sub && has_join(*t.sub)) return true;
  if (q.where && bool_has_join(*q.where)) return true;
  if (q.having && bool_has_join(*q.having)) return true;
  return q.set_rhs && has_join(*q.set_rhs);
}

}  // namespace mtsql::sql
