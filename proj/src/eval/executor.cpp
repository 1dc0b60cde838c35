#include "mtsql/eval/executor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>

namespace mtsql::eval {

using namespace sql;
using schema::Database;

std::string cell_key(const Cell& c) {
  if (std::holds_alternative<std::monostate>(c)) return "n";
  if (const auto* s = std::get_if<std::string>(&c)) return "s" + *s;
  char buf[40];
  std::snprintf(buf, sizeof buf, "d%.10g", std::get<double>(c));
  std::string out = buf;
  return out == "d-0" ? "d0" : out;
}

namespace {

std::string row_key(const std::vector<Cell>& row) {
  std::string k;
  for (const auto& c : row) k += cell_key(c) + '\x1f';
  return k;
}

bool is_null(const Cell& c) { return std::holds_alternative<std::monostate>(c); }

std::optional<double> as_number(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return *d;
  if (const auto* s = std::get_if<std::string>(&c)) {
    char* end = nullptr;
    const double d = std::strtod(s->c_str(), &end);
    if (!s->empty() && end == s->c_str() + s->size()) return d;
  }
  return std::nullopt;
}

// SQLite ordering: NULL < numbers < text. A numeric-looking string meeting a
// number is compared numerically (column affinity).
int compare(const Cell& a, const Cell& b) {
  if (is_null(a) || is_null(b)) return is_null(a) == is_null(b) ? 0 : (is_null(a) ? -1 : 1);
  const auto* da = std::get_if<double>(&a);
  const auto* db = std::get_if<double>(&b);
  if (da || db) {
    auto x = as_number(a), y = as_number(b);
    if (x && y) return *x < *y ? -1 : (*x > *y ? 1 : 0);
    return da ? -1 : 1;
  }
  const auto& sa = std::get<std::string>(a);
  const auto& sb = std::get<std::string>(b);
  return sa < sb ? -1 : (sa > sb ? 1 : 0);
}

bool like(std::string_view text, std::string_view pat) {
  // Iterative wildcard match; ASCII case-insensitive like SQLite.
  auto lower = [](char ch) { return static_cast<char>(std::tolower(static_cast<unsigned char>(ch))); };
  std::size_t t = 0, p = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pat.size() && (pat[p] == '_' || (pat[p] != '%' && lower(pat[p]) == lower(text[t])))) {
      ++t;
      ++p;
    } else if (p < pat.size() && pat[p] == '%') {
      star = p++;
      mark = t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pat.size() && pat[p] == '%') ++p;
  return p == pat.size();
}

Cell literal_cell(const Literal& lit) {
  if (lit.is_string) return lit.text;
  std::string t = lit.text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (t == "null") return std::monostate{};
  if (t == "true") return 1.0;
  if (t == "false") return 0.0;
  char* end = nullptr;
  const double d = std::strtod(lit.text.c_str(), &end);
  if (!lit.text.empty() && end == lit.text.c_str() + lit.text.size()) return d;
  return lit.text;
}

bool query_has_agg(const Query& q);

bool val_has_agg(const ValUnit& v) {
  return v.left.agg != Agg::None || (v.op != Arith::None && v.right.agg != Agg::None);
}

bool bool_has_agg(const BoolExpr& e) {
  if (e.kind == BoolExpr::Kind::Pred) return val_has_agg(e.pred.lhs);
  return std::any_of(e.children.begin(), e.children.end(), bool_has_agg);
}

bool query_has_agg(const Query& q) {
  for (const auto& s : q.select)
    if (s.agg != Agg::None || val_has_agg(s.val)) return true;
  if (q.having) return true;
  if (q.order)
    for (const auto& k : q.order->keys)
      if (val_has_agg(k)) return true;
  return false;
}

struct Unit {
  const Query* sub = nullptr;  // null for base tables
  int table = -1;
  std::vector<int> column_ids;  // column id per output position
  std::vector<std::vector<Cell>> rows;
};

using Combined = std::vector<const std::vector<Cell>*>;

// One level of the lexical scope chain: the FROM units of a query and the
// row currently bound to them.
struct Frame {
  const std::vector<Unit>* units;
  const Combined* row;
  const Frame* outer;
};

class Executor {
 public:
  explicit Executor(const Database& db) : db_(db), schema_(*db.schema) {}

  ResultTable run(const Query& q, const Frame* outer) {
    ResultTable left = run_single(q, outer);
    if (q.set_op == SetOp::None) return left;
    ResultTable right = run(*q.set_rhs, outer);
    return combine(q.set_op, left, right);
  }

 private:
  const Database& db_;
  const schema::SchemaGraph& schema_;

  static ResultTable combine(SetOp op, const ResultTable& a, const ResultTable& b) {
    std::set<std::string> in_b;
    for (const auto& r : b.rows) in_b.insert(row_key(r));
    ResultTable out;
    std::set<std::string> seen;
    auto emit = [&](const std::vector<Cell>& r) {
      if (seen.insert(row_key(r)).second) out.rows.push_back(r);
    };
    for (const auto& r : a.rows) {
      const bool hit = in_b.count(row_key(r)) > 0;
      if (op == SetOp::Union || (op == SetOp::Intersect && hit) || (op == SetOp::Except && !hit)) emit(r);
    }
    if (op == SetOp::Union)
      for (const auto& r : b.rows) emit(r);
    return out;
  }

  std::vector<Unit> build_units(const Query& q, const Frame* outer) {
    std::vector<Unit> units;
    for (const auto& tu : q.from.tables) {
      Unit u;
      if (tu.sub) {
        u.sub = tu.sub.get();
        for (const auto& item : tu.sub->select) u.column_ids.push_back(item.val.left.column);
        u.rows = run(*tu.sub, outer).rows;
      } else {
        u.table = tu.table;
        u.column_ids = schema_.tables[tu.table].columns;
        u.rows = db_.rows[tu.table];
      }
      units.push_back(std::move(u));
    }
    return units;
  }

  static std::optional<std::size_t> position(const Unit& u, int column) {
    for (std::size_t i = 0; i < u.column_ids.size(); ++i)
      if (u.column_ids[i] == column) return i;
    return std::nullopt;
  }

  Cell column_value(const ColUnit& cu, const Frame& f) const {
    if (cu.star()) throw ExecutionError("'*' outside count or select list");
    if (cu.source >= 0) {
      const auto& u = (*f.units)[cu.source];
      auto pos = position(u, cu.column);
      if (!pos) throw ExecutionError("column not produced by FROM unit: " + schema_.qualified(cu.column));
      return (*(*f.row)[cu.source])[*pos];
    }
    // Unresolved locally: correlated reference, nearest enclosing scope first.
    for (const Frame* g = f.outer; g; g = g->outer) {
      for (std::size_t k = 0; k < g->units->size(); ++k) {
        if (auto pos = position((*g->units)[k], cu.column)) return (*(*g->row)[k])[*pos];
      }
    }
    throw ExecutionError("unresolvable column reference: " + schema_.qualified(cu.column));
  }

  static Cell arith(Arith op, const Cell& a, const Cell& b) {
    auto x = as_number(a), y = as_number(b);
    if (is_null(a) || is_null(b) || !x || !y) return std::monostate{};
    switch (op) {
      case Arith::Plus: return *x + *y;
      case Arith::Minus: return *x - *y;
      case Arith::Times: return *x * *y;
      case Arith::Div: return *y == 0.0 ? Cell{} : Cell{*x / *y};
      case Arith::None: break;
    }
    return a;
  }

  static Cell aggregate(Agg agg, const std::vector<Cell>& values, bool distinct, bool star) {
    std::vector<Cell> vs;
    std::set<std::string> seen;
    for (const auto& v : values) {
      if (!star && is_null(v)) continue;
      if (distinct && !seen.insert(cell_key(v)).second) continue;
      vs.push_back(v);
    }
    if (agg == Agg::Count) return static_cast<double>(vs.size());
    if (vs.empty()) return std::monostate{};
    if (agg == Agg::Min || agg == Agg::Max) {
      Cell best = vs[0];
      for (const auto& v : vs) {
        const int c = compare(v, best);
        if ((agg == Agg::Min && c < 0) || (agg == Agg::Max && c > 0)) best = v;
      }
      return best;
    }
    double s = 0;
    for (const auto& v : vs) s += as_number(v).value_or(0.0);
    return agg == Agg::Avg ? s / static_cast<double>(vs.size()) : s;
  }

  // Value of a column unit over a group of rows (aggregated) or one row.
  Cell col_unit(const ColUnit& cu, const std::vector<Combined>& group, const Frame& base) const {
    if (cu.agg == Agg::None) {
      if (group.empty()) return std::monostate{};
      Frame f{base.units, &group.front(), base.outer};
      return column_value(cu, f);
    }
    std::vector<Cell> vals;
    for (const auto& r : group) {
      Frame f{base.units, &r, base.outer};
      vals.push_back(cu.star() ? Cell{1.0} : column_value(cu, f));
    }
    return aggregate(cu.agg, vals, cu.distinct, cu.star());
  }

  Cell val_unit(const ValUnit& v, const std::vector<Combined>& group, const Frame& base) const {
    Cell l = col_unit(v.left, group, base);
    if (v.op == Arith::None) return l;
    return arith(v.op, l, col_unit(v.right, group, base));
  }

  Cell select_item(const SelectItem& item, const std::vector<Combined>& group, const Frame& base) const {
    if (item.agg == Agg::None) return val_unit(item.val, group, base);
    if (item.val.op == Arith::None && item.val.left.agg == Agg::None) {
      ColUnit cu = item.val.left;
      cu.agg = item.agg;
      return col_unit(cu, group, base);
    }
    std::vector<Cell> vals;
    for (const auto& r : group) vals.push_back(val_unit(item.val, {r}, base));
    return aggregate(item.agg, vals, false, false);
  }

  std::vector<Cell> operand_values(const Operand& o, const std::vector<Combined>& group, const Frame& base) {
    switch (o.kind) {
      case Operand::Kind::Literal: return {literal_cell(o.literal)};
      case Operand::Kind::Column: return {col_unit(o.column, group, base)};
      case Operand::Kind::Subquery: {
        Frame f{base.units, group.empty() ? nullptr : &group.front(), base.outer};
        auto res = run(*o.subquery, group.empty() ? base.outer : &f);
        std::vector<Cell> out;
        for (const auto& r : res.rows)
          if (!r.empty()) out.push_back(r[0]);
        return out;
      }
    }
    return {};
  }

  bool predicate(const Predicate& p, const std::vector<Combined>& group, const Frame& base) {
    const Cell lhs = val_unit(p.lhs, group, base);
    if (is_null(lhs)) return false;
    const auto rhs = operand_values(p.rhs, group, base);
    bool result = false;
    if (p.op == Cmp::In) {
      for (const auto& r : rhs)
        if (!is_null(r) && compare(lhs, r) == 0) result = true;
    } else {
      // Scalar subqueries yield their first row; an empty one is NULL.
      if (rhs.empty() || is_null(rhs[0])) return false;
      const Cell& r = rhs[0];
      switch (p.op) {
        case Cmp::Eq: result = compare(lhs, r) == 0; break;
        case Cmp::Neq: result = compare(lhs, r) != 0; break;
        case Cmp::Lt: result = compare(lhs, r) < 0; break;
        case Cmp::Gt: result = compare(lhs, r) > 0; break;
        case Cmp::Le: result = compare(lhs, r) <= 0; break;
        case Cmp::Ge: result = compare(lhs, r) >= 0; break;
        case Cmp::Like: {
          const auto* pat = std::get_if<std::string>(&r);
          if (!pat) throw ExecutionError("LIKE pattern must be text");
          result = like(schema::render_cell(lhs), *pat);
          break;
        }
        case Cmp::Between: {
          if (!p.rhs2) throw ExecutionError("BETWEEN without upper bound");
          const auto hi = operand_values(*p.rhs2, group, base);
          if (hi.empty() || is_null(hi[0])) return false;
          result = compare(lhs, r) >= 0 && compare(lhs, hi[0]) <= 0;
          break;
        }
        case Cmp::In: break;
      }
    }
    return p.negated ? !result : result;
  }

  bool boolean(const BoolExpr& e, const std::vector<Combined>& group, const Frame& base) {
    switch (e.kind) {
      case BoolExpr::Kind::Pred: return predicate(e.pred, group, base);
      case BoolExpr::Kind::And:
        for (const auto& c : e.children)
          if (!boolean(c, group, base)) return false;
        return true;
      case BoolExpr::Kind::Or:
        for (const auto& c : e.children)
          if (boolean(c, group, base)) return true;
        return false;
    }
    return false;
  }

  static int max_source(const ValUnit& v) {
    return std::max(v.left.source, v.op == Arith::None ? -1 : v.right.source);
  }

  std::vector<Combined> join(const Query& q, const std::vector<Unit>& units, const Frame* outer) {
    std::vector<Combined> rows{Combined{}};
    for (std::size_t k = 0; k < units.size(); ++k) {
      std::vector<Combined> next;
      for (const auto& partial : rows) {
        for (const auto& r : units[k].rows) {
          Combined c = partial;
          c.push_back(&r);
          next.push_back(std::move(c));
        }
      }
      // ON conditions are applied as soon as every side they touch is bound.
      std::vector<Combined> kept;
      for (auto& c : next) {
        bool ok = true;
        for (const auto& p : q.from.joins) {
          int hi = max_source(p.lhs);
          if (p.rhs.kind == Operand::Kind::Column) hi = std::max(hi, p.rhs.column.source);
          if (hi != static_cast<int>(k)) continue;
          Frame f{&units, &c, outer};
          if (!predicate(p, {c}, f)) {
            ok = false;
            break;
          }
        }
        if (ok) kept.push_back(std::move(c));
      }
      rows = std::move(kept);
    }
    return rows;
  }

  std::vector<Cell> project_row(const Query& q, const std::vector<Unit>& units, const std::vector<Combined>& group,
                                const Frame& base) const {
    std::vector<Cell> out;
    for (const auto& item : q.select) {
      const auto& cu = item.val.left;
      if (item.agg == Agg::None && item.val.op == Arith::None && cu.agg == Agg::None && cu.star()) {
        if (group.empty()) continue;
        for (std::size_t k = 0; k < units.size(); ++k) {
          if (cu.source >= 0 && static_cast<std::size_t>(cu.source) != k) continue;
          for (const auto& cell : *group.front()[k]) out.push_back(cell);
        }
        continue;
      }
      out.push_back(select_item(item, group, base));
    }
    return out;
  }

  ResultTable run_single(const Query& q, const Frame* outer) {
    auto units = build_units(q, outer);
    auto rows = join(q, units, outer);
    const Frame base{&units, nullptr, outer};
    if (q.where) {
      std::vector<Combined> kept;
      for (auto& r : rows)
        if (boolean(*q.where, {r}, base)) kept.push_back(std::move(r));
      rows = std::move(kept);
    }

    std::vector<std::vector<Combined>> groups;
    if (!q.group_by.empty()) {
      std::map<std::string, std::size_t> index;
      for (auto& r : rows) {
        std::string key;
        Frame f{&units, &r, outer};
        for (const auto& g : q.group_by) key += cell_key(column_value(g, f)) + '\x1f';
        auto [it, fresh] = index.emplace(key, groups.size());
        if (fresh) groups.emplace_back();
        groups[it->second].push_back(std::move(r));
      }
    } else if (query_has_agg(q)) {
      groups.push_back(std::move(rows));  // one group, possibly empty
    } else {
      for (auto& r : rows) groups.push_back({std::move(r)});
    }

    if (q.having) {
      std::vector<std::vector<Combined>> kept;
      for (auto& g : groups)
        if (boolean(*q.having, g, base)) kept.push_back(std::move(g));
      groups = std::move(kept);
    }

    struct Out {
      std::vector<Cell> row;
      std::vector<Cell> keys;
    };
    std::vector<Out> out;
    for (const auto& g : groups) {
      Out o{project_row(q, units, g, base), {}};
      if (q.order)
        for (const auto& k : q.order->keys) o.keys.push_back(val_unit(k, g, base));
      out.push_back(std::move(o));
    }
    if (q.order) {
      const bool desc = q.order->desc;
      std::stable_sort(out.begin(), out.end(), [desc](const Out& a, const Out& b) {
        for (std::size_t i = 0; i < a.keys.size(); ++i) {
          const int c = compare(a.keys[i], b.keys[i]);
          if (c != 0) return desc ? c > 0 : c < 0;
        }
        return false;
      });
    }
    ResultTable res;
    std::set<std::string> seen;
    for (auto& o : out) {
      if (q.distinct && !seen.insert(row_key(o.row)).second) continue;
      res.rows.push_back(std::move(o.row));
    }
    if (q.limit && static_cast<long long>(res.rows.size()) > *q.limit) res.rows.resize(static_cast<std::size_t>(*q.limit));
    return res;
  }
};

}  // namespace

ResultTable execute(const Query& q, const Database& db) {
  if (!db.schema) throw ExecutionError("database has no schema");
  return Executor(db).run(q, nullptr);
}

bool same_result(const ResultTable& a, const ResultTable& b, bool ordered) {
  if (a.rows.size() != b.rows.size()) return false;
  std::vector<std::string> ka, kb;
  for (const auto& r : a.rows) ka.push_back(row_key(r));
  for (const auto& r : b.rows) kb.push_back(row_key(r));
  if (!ordered) {
    std::sort(ka.begin(), ka.end());
    std::sort(kb.begin(), kb.end());
  }
  return ka == kb;
}

}  // namespace mtsql::eval
