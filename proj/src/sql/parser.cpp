#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>

#include "mtsql/sql/ast.hpp"

namespace mtsql::sql {

std::string_view agg_name(Agg a) {
  switch (a) {
    case Agg::None: return "";
    case Agg::Count: return "count";
    case Agg::Sum: return "sum";
    case Agg::Avg: return "avg";
    case Agg::Min: return "min";
    case Agg::Max: return "max";
  }
  return "";
}

std::string_view arith_symbol(Arith a) {
  switch (a) {
    case Arith::None: return "";
    case Arith::Plus: return "+";
    case Arith::Minus: return "-";
    case Arith::Times: return "*";
    case Arith::Div: return "/";
  }
  return "";
}

std::string_view cmp_symbol(Cmp c) {
  switch (c) {
    case Cmp::Eq: return "=";
    case Cmp::Neq: return "!=";
    case Cmp::Lt: return "<";
    case Cmp::Gt: return ">";
    case Cmp::Le: return "<=";
    case Cmp::Ge: return ">=";
    case Cmp::Between: return "BETWEEN";
    case Cmp::In: return "IN";
    case Cmp::Like: return "LIKE";
  }
  return "";
}

std::string_view set_op_name(SetOp s) {
  switch (s) {
    case SetOp::None: return "";
    case SetOp::Union: return "UNION";
    case SetOp::Intersect: return "INTERSECT";
    case SetOp::Except: return "EXCEPT";
  }
  return "";
}

std::string normalize_literal(const Literal& lit) {
  std::string t = lit.text;
  const auto b = t.find_first_not_of(" \t");
  const auto e = t.find_last_not_of(" \t");
  t = b == std::string::npos ? "" : t.substr(b, e - b + 1);
  if (!t.empty()) {
    char* end = nullptr;
    const double d = std::strtod(t.c_str(), &end);
    if (end == t.c_str() + t.size() && std::isfinite(d)) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.15g", d);
      return buf;
    }
  }
  std::transform(t.begin(), t.end(), t.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return t;
}

namespace {

enum class TokType { Ident, Number, String, Symbol, End };

struct Tok {
  TokType type;
  std::string text;  // lowercased for identifiers
  std::string raw;
  std::size_t pos;
};

std::vector<Tok> lex(std::string_view s) {
  std::vector<Tok> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
      std::string raw(s.substr(start, i - start));
      std::string low = raw;
      std::transform(low.begin(), low.end(), low.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      out.push_back({TokType::Ident, low, raw, start});
    } else if (c == '`') {
      const auto close = s.find('`', i + 1);
      if (close == std::string_view::npos) throw ParseError("unterminated quoted identifier", start);
      std::string raw(s.substr(i + 1, close - i - 1));
      std::string low = raw;
      std::transform(low.begin(), low.end(), low.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      out.push_back({TokType::Ident, low, raw, start});
      i = close + 1;
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.')) ++i;
      if (i < s.size() && (s[i] == 'e' || s[i] == 'E') && i + 1 < s.size() &&
          (std::isdigit(static_cast<unsigned char>(s[i + 1])) || s[i + 1] == '-' || s[i + 1] == '+')) {
        i += 2;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      }
      std::string raw(s.substr(start, i - start));
      out.push_back({TokType::Number, raw, raw, start});
    } else if (c == '\'' || c == '"') {
      std::string val;
      ++i;
      for (;;) {
        if (i >= s.size()) throw ParseError("unterminated string literal", start);
        if (s[i] == c) {
          if (i + 1 < s.size() && s[i + 1] == c) {
            val.push_back(c);
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        val.push_back(s[i++]);
      }
      out.push_back({TokType::String, val, val, start});
    } else {
      static const char* two[] = {"!=", "<>", "<=", ">="};
      bool matched = false;
      for (const char* t : two) {
        if (s.substr(i, 2) == t) {
          out.push_back({TokType::Symbol, t, t, start});
          i += 2;
          matched = true;
          break;
        }
      }
      if (matched) continue;
      if (std::string_view("=<>(),.*+-/;").find(c) == std::string_view::npos) {
        throw ParseError(std::string("unexpected character '") + c + "'", start);
      }
      out.push_back({TokType::Symbol, std::string(1, c), std::string(1, c), start});
      ++i;
    }
  }
  out.push_back({TokType::End, "", "", s.size()});
  return out;
}

const std::set<std::string>& reserved() {
  static const std::set<std::string> words{
      "select", "from",  "where", "group", "by",       "having", "order",   "limit",  "union",
      "intersect", "except", "join", "on", "as",      "and",    "or",      "not",    "in",
      "like",   "between", "distinct", "asc", "desc", "inner",  "left",    "right",  "outer",
      "cross",  "natural"};
  return words;
}

std::optional<Agg> agg_from(const std::string& w) {
  if (w == "count") return Agg::Count;
  if (w == "sum") return Agg::Sum;
  if (w == "avg") return Agg::Avg;
  if (w == "min") return Agg::Min;
  if (w == "max") return Agg::Max;
  return std::nullopt;
}

struct Unit {
  int table = -1;
  QueryPtr sub;
  std::string alias;
};

struct Scope {
  std::vector<Unit> units;
  const Scope* outer = nullptr;
};

class Parser {
 public:
  Parser(std::string_view text, const schema::SchemaGraph& schema)
      : toks_(lex(text)), schema_(schema) {}

  QueryPtr parse_top() {
    auto q = parse_query(nullptr);
    if (peek().text == ";") ++i_;
    if (peek().type != TokType::End) fail("unexpected trailing token '" + peek().raw + "'");
    return q;
  }

 private:
  std::vector<Tok> toks_;
  std::size_t i_ = 0;
  const schema::SchemaGraph& schema_;

  const Tok& peek(std::size_t k = 0) const { return toks_[std::min(i_ + k, toks_.size() - 1)]; }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, peek().pos); }
  bool is_kw(const char* w, std::size_t k = 0) const {
    return peek(k).type == TokType::Ident && peek(k).text == w;
  }
  bool accept_kw(const char* w) {
    if (!is_kw(w)) return false;
    ++i_;
    return true;
  }
  void expect_kw(const char* w) {
    if (!accept_kw(w)) fail(std::string("expected ") + w);
  }
  bool is_sym(const char* s, std::size_t k = 0) const {
    return peek(k).type == TokType::Symbol && peek(k).text == s;
  }
  bool accept_sym(const char* s) {
    if (!is_sym(s)) return false;
    ++i_;
    return true;
  }
  void expect_sym(const char* s) {
    if (!accept_sym(s)) fail(std::string("expected '") + s + "'");
  }

  QueryPtr parse_query(const Scope* outer) {
    if (is_sym("(") && is_kw("select", 1)) {
      // Parenthesized operand of a set operation.
      ++i_;
      auto q = parse_query(outer);
      expect_sym(")");
      return q;
    }
    auto q = std::make_shared<Query>();
    Scope scope;
    scope.outer = outer;
    expect_kw("select");
    const std::size_t select_begin = i_;
    // FROM comes first so the select list can be resolved against aliases.
    std::size_t depth = 0, from_at = 0;
    for (std::size_t k = i_; k < toks_.size(); ++k) {
      const auto& t = toks_[k];
      if (t.type == TokType::Symbol && t.text == "(") ++depth;
      if (t.type == TokType::Symbol && t.text == ")") {
        if (depth == 0) break;
        --depth;
      }
      if (depth == 0 && t.type == TokType::Ident && t.text == "from") {
        from_at = k;
        break;
      }
      if (t.type == TokType::End) break;
    }
    if (from_at == 0) fail("SELECT without FROM");
    if (from_at == select_begin) fail("empty select list");
    i_ = from_at + 1;
    parse_from(*q, scope);
    const std::size_t after_from = i_;
    i_ = select_begin;
    if (accept_kw("distinct")) q->distinct = true;
    for (;;) {
      q->select.push_back(parse_select_item(scope));
      if (!accept_sym(",")) break;
    }
    if (i_ != from_at) fail("unexpected token '" + peek().raw + "' in select list");
    i_ = after_from;
    if (accept_kw("where")) q->where = parse_or(scope);
    if (is_kw("group")) {
      ++i_;
      expect_kw("by");
      for (;;) {
        q->group_by.push_back(parse_col_unit(scope, false));
        if (!accept_sym(",")) break;
      }
    }
    if (accept_kw("having")) q->having = parse_or(scope);
    if (is_kw("order")) {
      ++i_;
      expect_kw("by");
      OrderBy ob;
      for (;;) {
        ob.keys.push_back(parse_val_unit(scope));
        if (accept_kw("desc")) ob.desc = true;
        else if (accept_kw("asc")) ob.desc = false;
        if (!accept_sym(",")) break;
      }
      q->order = std::move(ob);
    }
    if (accept_kw("limit")) {
      if (peek().type != TokType::Number) fail("LIMIT expects a number");
      q->limit = std::stoll(peek().text);
      ++i_;
    }
    if (accept_kw("union")) q->set_op = SetOp::Union;
    else if (accept_kw("intersect")) q->set_op = SetOp::Intersect;
    else if (accept_kw("except")) q->set_op = SetOp::Except;
    if (q->set_op != SetOp::None) {
      accept_kw("all");
      q->set_rhs = parse_query(outer);
    }
    return q;
  }

  std::optional<std::string> parse_alias() {
    if (accept_kw("as")) {
      if (peek().type != TokType::Ident) fail("expected alias");
      return toks_[i_++].text;
    }
    if (peek().type == TokType::Ident && !reserved().count(peek().text)) return toks_[i_++].text;
    return std::nullopt;
  }

  void parse_table_unit(Query& q, Scope& scope) {
    Unit u;
    TableUnit tu;
    if (is_sym("(")) {
      ++i_;
      if (!is_kw("select")) fail("expected subquery in FROM");
      tu.sub = parse_query(&scope);
      expect_sym(")");
      u.sub = tu.sub;
    } else {
      if (peek().type != TokType::Ident) fail("expected table name");
      auto t = schema_.find_table(peek().text);
      if (!t) fail("unknown table '" + peek().raw + "'");
      ++i_;
      tu.table = *t;
      u.table = *t;
      u.alias = schema_.tables[*t].name;
    }
    if (auto a = parse_alias()) u.alias = *a;
    scope.units.push_back(std::move(u));
    q.from.tables.push_back(std::move(tu));
  }

  void parse_from(Query& q, Scope& scope) {
    parse_table_unit(q, scope);
    for (;;) {
      if (accept_sym(",")) {
        parse_table_unit(q, scope);
        continue;
      }
      bool join = false;
      while (is_kw("inner") || is_kw("left") || is_kw("right") || is_kw("outer") || is_kw("cross") ||
             is_kw("natural"))
        ++i_;
      if (accept_kw("join")) join = true;
      if (!join) break;
      parse_table_unit(q, scope);
      if (accept_kw("on")) {
        for (;;) {
          if (accept_sym("(")) {
            q.from.joins.push_back(parse_predicate(scope));
            expect_sym(")");
          } else {
            q.from.joins.push_back(parse_predicate(scope));
          }
          if (!accept_kw("and")) break;
        }
      }
    }
  }

  SelectItem parse_select_item(Scope& scope) {
    SelectItem item;
    item.val = parse_val_unit(scope);
    if (item.val.op == Arith::None && item.val.left.agg != Agg::None) {
      item.agg = item.val.left.agg;
      item.val.left.agg = Agg::None;
    }
    parse_alias();
    return item;
  }

  ValUnit parse_val_unit(Scope& scope) {
    ValUnit v;
    v.left = parse_col_unit(scope, true);
    if (peek().type == TokType::Symbol) {
      const std::string& s = peek().text;
      Arith op = s == "+" ? Arith::Plus : s == "-" ? Arith::Minus : s == "*" ? Arith::Times
                 : s == "/" ? Arith::Div : Arith::None;
      if (op != Arith::None) {
        ++i_;
        v.op = op;
        v.right = parse_col_unit(scope, true);
      }
    }
    return v;
  }

  ColUnit parse_col_unit(Scope& scope, bool allow_agg) {
    ColUnit cu;
    if (peek().type == TokType::Ident && is_sym("(", 1)) {
      auto agg = agg_from(peek().text);
      if (!agg) fail("unsupported function '" + peek().raw + "'");
      if (!allow_agg) fail("aggregate not allowed here");
      i_ += 2;
      cu.agg = *agg;
      if (accept_kw("distinct")) cu.distinct = true;
      resolve_column(scope, cu);
      expect_sym(")");
      return cu;
    }
    if (accept_kw("distinct")) cu.distinct = true;
    resolve_column(scope, cu);
    return cu;
  }

  // Reads [qualifier .] name | * into cu.column / cu.source.
  void resolve_column(const Scope& scope, ColUnit& cu) {
    const std::size_t at = i_;
    if (accept_sym("*")) {
      cu.column = -1;
      return;
    }
    if (peek().type != TokType::Ident || reserved().count(peek().text)) fail("expected column");
    std::string first = toks_[i_++].text;
    std::optional<std::string> qualifier;
    std::string name = first;
    if (accept_sym(".")) {
      qualifier = first;
      if (accept_sym("*")) {
        name = "*";
      } else {
        if (peek().type != TokType::Ident) fail("expected column after '.'");
        name = toks_[i_++].text;
      }
    }
    if (!lookup(scope, qualifier, name, cu, true)) {
      i_ = at;
      fail("unknown column '" + (qualifier ? *qualifier + "." : std::string()) + name + "'");
    }
  }

  bool lookup_unit(const Unit& u, const std::string& name, ColUnit& cu, std::size_t index, bool local) const {
    if (name == "*") {
      cu.column = -1;
      cu.source = local ? static_cast<int>(index) : -1;
      return true;
    }
    if (u.sub) {
      for (const auto& item : u.sub->select) {
        const int c = item.val.left.column;
        if (c >= 0 && schema_.columns[c].name == name) {
          cu.column = c;
          cu.source = local ? static_cast<int>(index) : -1;
          return true;
        }
      }
      return false;
    }
    if (auto c = schema_.find_column(u.table, name)) {
      cu.column = *c;
      cu.source = local ? static_cast<int>(index) : -1;
      return true;
    }
    return false;
  }

  bool lookup(const Scope& scope, const std::optional<std::string>& qualifier, const std::string& name,
              ColUnit& cu, bool local) const {
    for (std::size_t k = 0; k < scope.units.size(); ++k) {
      const auto& u = scope.units[k];
      if (qualifier) {
        const bool hit = u.alias == *qualifier || (u.table >= 0 && schema_.tables[u.table].name == *qualifier);
        if (hit && lookup_unit(u, name, cu, k, local)) return true;
      } else if (name != "*" && lookup_unit(u, name, cu, k, local)) {
        return true;
      }
    }
    if (scope.outer) return lookup(*scope.outer, qualifier, name, cu, false);
    return false;
  }

  BoolExpr parse_or(Scope& scope) {
    BoolExpr first = parse_and(scope);
    if (!is_kw("or")) return first;
    BoolExpr node;
    node.kind = BoolExpr::Kind::Or;
    auto push = [&](BoolExpr e) {
      if (e.kind == BoolExpr::Kind::Or) {
        for (auto& c : e.children) node.children.push_back(std::move(c));
      } else {
        node.children.push_back(std::move(e));
      }
    };
    push(std::move(first));
    while (accept_kw("or")) push(parse_and(scope));
    return node;
  }

  BoolExpr parse_and(Scope& scope) {
    BoolExpr first = parse_atom(scope);
    if (!is_kw("and")) return first;
    BoolExpr node;
    node.kind = BoolExpr::Kind::And;
    auto push = [&](BoolExpr e) {
      if (e.kind == BoolExpr::Kind::And) {
        for (auto& c : e.children) node.children.push_back(std::move(c));
      } else {
        node.children.push_back(std::move(e));
      }
    };
    push(std::move(first));
    while (accept_kw("and")) push(parse_atom(scope));
    return node;
  }

  BoolExpr parse_atom(Scope& scope) {
    if (is_sym("(") && !is_kw("select", 1)) {
      ++i_;
      BoolExpr e = parse_or(scope);
      expect_sym(")");
      return e;
    }
    BoolExpr e;
    e.pred = parse_predicate(scope);
    return e;
  }

  Predicate parse_predicate(Scope& scope) {
    Predicate p;
    p.lhs = parse_val_unit(scope);
    if (accept_kw("not")) p.negated = true;
    const Tok& t = peek();
    if (t.type == TokType::Symbol) {
      if (t.text == "=") p.op = Cmp::Eq;
      else if (t.text == "!=" || t.text == "<>") p.op = Cmp::Neq;
      else if (t.text == "<") p.op = Cmp::Lt;
      else if (t.text == ">") p.op = Cmp::Gt;
      else if (t.text == "<=") p.op = Cmp::Le;
      else if (t.text == ">=") p.op = Cmp::Ge;
      else fail("expected comparison operator");
      if (p.negated) fail("NOT before a comparison symbol is unsupported");
      ++i_;
      p.rhs = parse_operand(scope);
      return p;
    }
    if (accept_kw("between")) {
      p.op = Cmp::Between;
      p.rhs = parse_operand(scope);
      expect_kw("and");
      p.rhs2 = parse_operand(scope);
    } else if (accept_kw("in")) {
      p.op = Cmp::In;
      p.rhs = parse_operand(scope);
    } else if (accept_kw("like")) {
      p.op = Cmp::Like;
      p.rhs = parse_operand(scope);
    } else {
      fail("expected comparison operator");
    }
    return p;
  }

  Operand parse_operand(Scope& scope) {
    Operand o;
    if (is_sym("(") && is_kw("select", 1)) {
      ++i_;
      o.kind = Operand::Kind::Subquery;
      o.subquery = parse_query(&scope);
      expect_sym(")");
      return o;
    }
    if (peek().type == TokType::String) {
      o.literal = {toks_[i_++].raw, true};
      return o;
    }
    if (is_sym("-") && peek(1).type == TokType::Number) {
      ++i_;
      o.literal = {"-" + toks_[i_++].raw, false};
      return o;
    }
    if (peek().type == TokType::Number) {
      o.literal = {toks_[i_++].raw, false};
      return o;
    }
    if (peek().type == TokType::Ident) {
      const std::size_t save = i_;
      try {
        o.kind = Operand::Kind::Column;
        o.column = parse_col_unit(scope, true);
        return o;
      } catch (const ParseError&) {
        i_ = save;
        const std::string w = peek().text;
        if (w == "true" || w == "false" || w == "null") {
          ++i_;
          o.kind = Operand::Kind::Literal;
          o.literal = {w, false};
          return o;
        }
        throw;
      }
    }
    fail("expected value");
  }
};

}  // namespace

QueryPtr parse_sql(std::string_view text, const schema::SchemaGraph& schema) {
  return Parser(text, schema).parse_top();
}

}  // namespace mtsql::sql
