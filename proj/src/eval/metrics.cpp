#include "mtsql/eval/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "mtsql/sql/clauses.hpp"

namespace mtsql::eval {

using namespace sql;

bool exact_set_match(const Query& pred, const Query& gold) {
  return decompose_clauses(pred) == decompose_clauses(gold);
}

bool execution_accuracy(const Query& pred, const Query& gold, const schema::Database& db) {
  const ResultTable g = execute(gold, db);
  ResultTable p;
  try {
    p = execute(pred, db);
  } catch (const ExecutionError&) {
    return false;
  }
  return same_result(p, g, pred.order.has_value() && gold.order.has_value());
}

bool execution_accuracy(std::string_view pred_sql, const Query& gold, const schema::Database& db) {
  QueryPtr pred;
  try {
    pred = parse_sql(pred_sql, *db.schema);
  } catch (const ParseError&) {
    return false;
  }
  return execution_accuracy(*pred, gold, db);
}

std::string_view hardness_name(Hardness h) {
  switch (h) {
    case Hardness::Easy: return "easy";
    case Hardness::Medium: return "medium";
    case Hardness::Hard: return "hard";
    case Hardness::Extra: return "extra";
  }
  return "?";
}

namespace {

// Spider stores WHERE/HAVING as a flat [cond, "and"|"or", cond, ...] list.
struct Flat {
  std::vector<const Predicate*> conds;
  int ands = 0, ors = 0;
};

void flatten(const BoolExpr& e, Flat& f) {
  if (e.kind == BoolExpr::Kind::Pred) {
    f.conds.push_back(&e.pred);
    return;
  }
  const int links = static_cast<int>(e.children.size()) - 1;
  (e.kind == BoolExpr::Kind::And ? f.ands : f.ors) += links;
  for (const auto& c : e.children) flatten(c, f);
}

Flat flat(const std::optional<BoolExpr>& e) {
  Flat f;
  if (e) flatten(*e, f);
  return f;
}

}  // namespace

HardnessCounts hardness_components(const Query& q) {
  HardnessCounts h;
  const Flat where = flat(q.where), having = flat(q.having);

  if (!where.conds.empty()) ++h.component1;
  if (!q.group_by.empty()) ++h.component1;
  if (q.order) ++h.component1;
  if (q.limit) ++h.component1;
  if (!q.from.tables.empty()) h.component1 += static_cast<int>(q.from.tables.size()) - 1;
  h.component1 += where.ors + having.ors;
  for (const auto* f : {&where, &having})
    for (const auto* p : f->conds)
      if (p->op == Cmp::Like) ++h.component1;

  for (const auto* f : {&where, &having})
    for (const auto* p : f->conds) {
      if (p->rhs.kind == Operand::Kind::Subquery) ++h.component2;
      if (p->rhs2 && p->rhs2->kind == Operand::Kind::Subquery) ++h.component2;
    }
  for (const auto& p : q.from.joins)
    if (p.rhs.kind == Operand::Kind::Subquery) ++h.component2;
  if (q.set_op != SetOp::None) ++h.component2;

  int agg = 0;
  for (const auto& s : q.select) agg += s.agg != Agg::None;
  // The reference script reads the NOT flag of a condition where it expects
  // an aggregation id.
  for (const auto* p : where.conds) agg += p->negated;
  for (const auto& g : q.group_by) agg += g.agg != Agg::None;
  if (q.order) {
    for (const auto& k : q.order->keys) {
      agg += k.left.agg != Agg::None;
      if (k.op != Arith::None) agg += k.right.agg != Agg::None;
    }
  }
  // Same script, HAVING: every "and"/"or" string counts, plus negated conds.
  for (const auto* p : having.conds) agg += p->negated;
  agg += having.ands + having.ors;
  if (agg > 1) ++h.others;
  if (q.select.size() > 1) ++h.others;
  if (where.conds.size() > 1) ++h.others;
  if (q.group_by.size() > 1) ++h.others;
  return h;
}

Hardness hardness(const Query& q) {
  const auto [c1, c2, o] = hardness_components(q);
  if (c1 <= 1 && o == 0 && c2 == 0) return Hardness::Easy;
  if ((o <= 2 && c1 <= 1 && c2 == 0) || (c1 <= 2 && o < 2 && c2 == 0)) return Hardness::Medium;
  if ((o > 2 && c1 <= 2 && c2 == 0) || (2 < c1 && c1 <= 3 && o <= 2 && c2 == 0) || (c1 <= 1 && o == 0 && c2 <= 1))
    return Hardness::Hard;
  return Hardness::Extra;
}

std::string_view metric_name(Metric m) { return m == Metric::Execution ? "execution" : "exact-set-match"; }

void EvalReport::add(Hardness h, bool ok) {
  ++count[static_cast<std::size_t>(h)];
  correct[static_cast<std::size_t>(h)] += ok;
}

int EvalReport::total() const { return count[0] + count[1] + count[2] + count[3]; }
int EvalReport::total_correct() const { return correct[0] + correct[1] + correct[2] + correct[3]; }

double EvalReport::accuracy(Hardness h) const {
  const auto i = static_cast<std::size_t>(h);
  return count[i] ? static_cast<double>(correct[i]) / count[i] : 0.0;
}

double EvalReport::accuracy() const { return total() ? static_cast<double>(total_correct()) / total() : 0.0; }

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["metric"] = std::string(metric_name(metric));
  for (std::size_t i = 0; i < kHardnessLevels; ++i) {
    const auto h = static_cast<Hardness>(i);
    j["levels"][std::string(hardness_name(h))] = {{"count", count[i]}, {"correct", correct[i]}, {"accuracy", accuracy(h)}};
  }
  j["all"] = {{"count", total()}, {"correct", total_correct()}, {"accuracy", accuracy()}};
  return j;
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %8s %8s\n", metric_name(metric).data(), "easy", "medium", "hard",
                "extra", "all");
  os << buf;
  std::snprintf(buf, sizeof buf, "%-16s %8d %8d %8d %8d %8d\n", "count", count[0], count[1], count[2], count[3], total());
  os << buf;
  std::snprintf(buf, sizeof buf, "%-16s %8.3f %8.3f %8.3f %8.3f %8.3f\n", "accuracy", accuracy(Hardness::Easy),
                accuracy(Hardness::Medium), accuracy(Hardness::Hard), accuracy(Hardness::Extra), accuracy());
  os << buf;
  return os.str();
}

}  // namespace mtsql::eval
