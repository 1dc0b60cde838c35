#include "mtsql/ote/ote.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

namespace mtsql::ote {

using namespace tensor;
using schema::NodeKind;

namespace {

constexpr std::string_view kNames[] = {"JOIN_ON_TC", "JOIN_ON_CC", "WHERE_TC", "GROUP_BY_TC",
                                       "ORDERBY_TC", "SELECT_TC",  "NONE"};

}  // namespace

std::string_view relationship_name(Relationship r) { return kNames[static_cast<std::size_t>(r)]; }

Relationship parse_relationship(std::string_view name) {
  for (std::size_t i = 0; i < kRelationshipCount; ++i)
    if (kNames[i] == name) return static_cast<Relationship>(i);
  throw OteError("unknown relationship: " + std::string(name));
}

namespace {

class TripleWalker {
 public:
  TripleWalker(const schema::SchemaGraph& s, const schema::InputSequence& seq) : schema_(s), seq_(seq) {}

  void walk(const sql::Query& q) {
    std::vector<int> tables;
    for (const auto& u : q.from.tables) {
      if (u.sub) walk(*u.sub);
      else tables.push_back(u.table);
    }
    const int single = q.from.tables.size() == 1 && !q.from.tables[0].sub ? q.from.tables[0].table : -1;

    for (std::size_t i = 0; i + 1 < q.from.tables.size(); ++i) {
      const auto &a = q.from.tables[i], &b = q.from.tables[i + 1];
      if (!a.sub && !b.sub) add(table_pos(a.table), table_pos(b.table), Relationship::JoinOnTc);
    }
    for (const auto& p : q.from.joins) {
      if (p.rhs.kind == sql::Operand::Kind::Column && !p.lhs.left.star() && !p.rhs.column.star()) {
        add(column_pos(p.lhs.left.column), column_pos(p.rhs.column.column), Relationship::JoinOnCc);
      }
    }
    for (const auto& item : q.select) val(item.val, single, Relationship::SelectTc);
    if (q.where) condition(*q.where, single);
    if (q.having) condition(*q.having, single);
    for (const auto& c : q.group_by) col(c, single, Relationship::GroupByTc);
    if (q.order)
      for (const auto& k : q.order->keys) val(k, single, Relationship::OrderByTc);
    if (q.set_rhs) walk(*q.set_rhs);
  }

  TripleSet result() const { return {out_.begin(), out_.end()}; }

 private:
  std::size_t table_pos(int t) const {
    if (t < 0 || static_cast<std::size_t>(t) >= seq_.table_pos.size())
      throw OteError("table id " + std::to_string(t) + " not in the input sequence");
    return seq_.table_pos[t];
  }
  std::size_t column_pos(int c) const {
    if (c < 0 || static_cast<std::size_t>(c) >= seq_.column_pos.size())
      throw OteError("column id " + std::to_string(c) + " not in the input sequence");
    return seq_.column_pos[c];
  }
  void add(std::size_t s, std::size_t o, Relationship r) { out_.insert({s, s, o, o, r}); }

  void col(const sql::ColUnit& c, int single, Relationship r) {
    if (c.star()) {
      if (single >= 0) add(table_pos(single), table_pos(single), r);
      return;
    }
    if (static_cast<std::size_t>(c.column) >= schema_.columns.size())
      throw OteError("column id " + std::to_string(c.column) + " not in schema");
    add(table_pos(schema_.columns[c.column].table), column_pos(c.column), r);
  }
  void val(const sql::ValUnit& v, int single, Relationship r) {
    col(v.left, single, r);
    if (v.op != sql::Arith::None) col(v.right, single, r);
  }
  void operand(const sql::Operand& o, int single) {
    if (o.kind == sql::Operand::Kind::Subquery) walk(*o.subquery);
    else if (o.kind == sql::Operand::Kind::Column) col(o.column, single, Relationship::WhereTc);
  }
  // HAVING columns share WHERE_TC: the relationship set has no HAVING label.
  void condition(const sql::BoolExpr& e, int single) {
    if (e.kind != sql::BoolExpr::Kind::Pred) {
      for (const auto& c : e.children) condition(c, single);
      return;
    }
    val(e.pred.lhs, single, Relationship::WhereTc);
    operand(e.pred.rhs, single);
    if (e.pred.rhs2) operand(*e.pred.rhs2, single);
  }

  const schema::SchemaGraph& schema_;
  const schema::InputSequence& seq_;
  std::set<OperatorTriple> out_;
};

}  // namespace

TripleSet gold_triples(const sql::Query& q, const schema::SchemaGraph& schema, const schema::InputSequence& seq) {
  TripleWalker w(schema, seq);
  w.walk(q);
  return w.result();
}

OteModel make_ote(ParameterStore& store, const OteConfig& config, std::size_t d, Rng& rng) {
  if (config.slots == 0) throw std::invalid_argument("ote: slots must be positive");
  OteModel m;
  m.config = config;
  m.d = d;
  Tensor q({config.slots, d});
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = rng.uniform(-1.0, 1.0);
  m.queries = store.add("ote.queries", std::move(q));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = "ote.layer" + std::to_string(l);
    m.layers.push_back({nn::make_attention(store, p + ".self", d, config.heads, rng),
                        nn::make_attention(store, p + ".cross", d, config.heads, rng), nn::make_norm(store, p + ".norm1", d),
                        nn::make_norm(store, p + ".norm2", d), nn::make_norm(store, p + ".norm3", d),
                        nn::make_ffn(store, p + ".ffn", d, 4 * d, rng)});
  }
  m.relation = nn::make_linear(store, "ote.relation", d, kRelationshipCount, rng);
  m.s_start = nn::make_linear(store, "ote.s_start", d, d, rng);
  m.s_end = nn::make_linear(store, "ote.s_end", d, d, rng);
  m.o_start = nn::make_linear(store, "ote.o_start", d, d, rng);
  m.o_end = nn::make_linear(store, "ote.o_end", d, d, rng);
  return m;
}

SlotLogits run_ote(Context& ctx, const OteModel& m, const Var& states) {
  if (states.cols() != m.d) throw ShapeError("run_ote: encoder width " + std::to_string(states.cols()) +
                                             " != model width " + std::to_string(m.d));
  const double rate = m.config.dropout;
  Var x = ctx(m.queries);
  for (const auto& l : m.layers) {
    x = nn::norm(ctx, l.norm1, add(x, ctx.drop(nn::attend(ctx, l.self, x, x, rate), rate)));
    x = nn::norm(ctx, l.norm2, add(x, ctx.drop(nn::attend(ctx, l.cross, x, states, rate), rate)));
    x = nn::norm(ctx, l.norm3, add(x, ctx.drop(nn::ffn(ctx, l.ffn, x, rate), rate)));
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(m.d));
  Var keys = transpose(states);
  auto pointer = [&](const nn::Linear& p) { return log_softmax(scale(matmul(nn::linear(ctx, p, x), keys), inv)); };
  return {log_softmax(nn::linear(ctx, m.relation, x)), pointer(m.s_start), pointer(m.s_end), pointer(m.o_start),
          pointer(m.o_end)};
}

namespace {

std::size_t argmax_from(const Tensor& t, std::size_t row, std::size_t from) {
  std::size_t best = from;
  for (std::size_t c = from; c < t.cols(); ++c)
    if (t.at(row, c) > t.at(row, best)) best = c;
  return best;
}

}  // namespace

TripleSet decode_triples(const SlotLogits& slots) {
  std::set<OperatorTriple> out;
  const Tensor &r = slots.relation.value(), &ss = slots.s_start.value(), &se = slots.s_end.value(),
               &os = slots.o_start.value(), &oe = slots.o_end.value();
  for (std::size_t z = 0; z < r.rows(); ++z) {
    const auto rel = static_cast<Relationship>(argmax_from(r, z, 0));
    if (rel == Relationship::None) continue;
    OperatorTriple t;
    t.r = rel;
    t.s_start = argmax_from(ss, z, 0);
    t.s_end = argmax_from(se, z, t.s_start);
    t.o_start = argmax_from(os, z, 0);
    t.o_end = argmax_from(oe, z, t.o_start);
    out.insert(t);
  }
  return {out.begin(), out.end()};
}

Assignment hungarian_match(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) return {};
  const std::size_t m = cost[0].size();
  for (const auto& row : cost) {
    if (row.size() != m) throw std::invalid_argument("hungarian_match: ragged cost matrix");
    for (double c : row)
      if (!std::isfinite(c)) throw std::invalid_argument("hungarian_match: non-finite cost");
  }
  if (n > m) {
    throw OteError("hungarian_match: " + std::to_string(n) + " gold triples but only " + std::to_string(m) +
                   " slots; raise the slot count Z");
  }
  // Shortest augmenting paths with row/column potentials, 1-based with a
  // virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment a;
  a.assignment.assign(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) a.assignment[p[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i) a.total += cost[i][a.assignment[i]];
  return a;
}

double triple_match_cost(const OperatorTriple& gold, const SlotLogits& slots, std::size_t slot) {
  double c = -slots.relation.value().at(slot, static_cast<std::size_t>(gold.r));
  if (gold.r == Relationship::None) return c;
  c -= slots.s_start.value().at(slot, gold.s_start);
  c -= slots.s_end.value().at(slot, gold.s_end);
  c -= slots.o_start.value().at(slot, gold.o_start);
  c -= slots.o_end.value().at(slot, gold.o_end);
  return c;
}

Var ote_loss(const TripleSet& gold, const SlotLogits& slots) {
  const std::size_t z = slots.relation.rows(), len = slots.s_start.cols();
  for (const auto& t : gold) {
    if (t.r == Relationship::None) throw OteError("ote_loss: gold triples cannot be NONE");
    if (std::max({t.s_start, t.s_end, t.o_start, t.o_end}) >= len) throw OteError("ote_loss: gold span outside sequence");
  }
  if (gold.size() > z) {
    throw OteError("ote_loss: " + std::to_string(gold.size()) + " gold triples but only " + std::to_string(z) +
                   " slots; raise the slot count Z");
  }
  const OperatorTriple none{};
  std::vector<std::vector<double>> cost(z, std::vector<double>(z));
  for (std::size_t i = 0; i < z; ++i)
    for (std::size_t j = 0; j < z; ++j) cost[i][j] = triple_match_cost(i < gold.size() ? gold[i] : none, slots, j);
  const auto match = hungarian_match(cost);

  std::vector<std::size_t> rel, ss, se, os, oe;
  for (std::size_t i = 0; i < z; ++i) {
    const std::size_t slot = match.assignment[i];
    if (i < gold.size()) {
      const auto& g = gold[i];
      rel.push_back(slot * kRelationshipCount + static_cast<std::size_t>(g.r));
      ss.push_back(slot * len + g.s_start);
      se.push_back(slot * len + g.s_end);
      os.push_back(slot * len + g.o_start);
      oe.push_back(slot * len + g.o_end);
    } else {
      rel.push_back(slot * kRelationshipCount + static_cast<std::size_t>(Relationship::None));
    }
  }
  Var total = sum(pick(slots.relation, rel));
  if (!gold.empty()) {
    total = add(total, sum(pick(slots.s_start, ss)));
    total = add(total, sum(pick(slots.s_end, se)));
    total = add(total, sum(pick(slots.o_start, os)));
    total = add(total, sum(pick(slots.o_end, oe)));
  }
  return scale(total, -1.0);
}

NodeSet triple_nodes(const TripleSet& triples, const schema::InputSequence& seq) {
  std::set<int> tables, columns;
  auto cover = [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p <= e && p < seq.size(); ++p) {
      const auto& n = seq.nodes[p];
      if (n.kind == NodeKind::Table) tables.insert(n.ref);
      if (n.kind == NodeKind::Column) columns.insert(n.ref);
    }
  };
  for (const auto& t : triples) {
    cover(t.s_start, t.s_end);
    cover(t.o_start, t.o_end);
  }
  return {{tables.begin(), tables.end()}, {columns.begin(), columns.end()}};
}

std::string triples_to_jsonl(const TripleSet& triples, const schema::InputSequence& seq,
                             const schema::SchemaGraph& schema) {
  auto text = [&](std::size_t b, std::size_t e) {
    std::string out;
    for (std::size_t p = b; p <= e && p < seq.size(); ++p) {
      const auto& n = seq.nodes[p];
      std::string piece;
      if (n.kind == NodeKind::Table) piece = schema.tables[n.ref].original;
      else if (n.kind == NodeKind::Column) piece = schema.tables[schema.columns[n.ref].table].original + "." + schema.columns[n.ref].original;
      else for (const auto& w : n.words) piece += (piece.empty() ? "" : " ") + w;
      out += (out.empty() ? "" : " ") + piece;
    }
    return out;
  };
  std::string out;
  for (const auto& t : triples) {
    nlohmann::json j = {{"subject", text(t.s_start, t.s_end)},
                        {"object", text(t.o_start, t.o_end)},
                        {"relationship", relationship_name(t.r)}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace mtsql::ote
