#include "mtsql/linking/linking.hpp"

#include <algorithm>
#include <map>

#include "mtsql/linking/text.hpp"

namespace mtsql::linking {

using namespace tensor;
using schema::Relation;

std::string_view category_name(LinkCategory c) {
  switch (c) {
    case LinkCategory::Table: return "q-tab";
    case LinkCategory::Column: return "q-col";
    case LinkCategory::Value: return "q-value";
  }
  return "?";
}

std::string_view grade_name(MatchGrade g) {
  switch (g) {
    case MatchGrade::Exact: return "exact";
    case MatchGrade::Partial: return "partial";
    case MatchGrade::StemPartial: return "stem-partial";
  }
  return "?";
}

namespace {

bool contains_run(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

std::vector<std::string> stems(const std::vector<std::string>& words) {
  std::vector<std::string> out;
  for (const auto& w : words) out.push_back(stem(w));
  return out;
}

struct Target {
  LinkCategory category;
  int node;
  std::vector<std::string> words, stemmed;
};

std::optional<MatchGrade> grade(const std::vector<std::string>& span, const std::vector<std::string>& span_stems,
                                bool all_stop, const Target& t) {
  if (span == t.words) return MatchGrade::Exact;
  if (all_stop) return std::nullopt;
  if (contains_run(t.words, span)) return MatchGrade::Partial;
  if (contains_run(t.stemmed, span_stems)) return MatchGrade::StemPartial;
  return std::nullopt;
}

}  // namespace

std::vector<LinkCandidate> candidate_links(const std::vector<std::string>& question, const schema::SchemaGraph& s) {
  // Targets grouped by (category, node); a value target group holds every
  // distinct value of its column.
  std::vector<std::vector<Target>> groups;
  for (std::size_t t = 0; t < s.tables.size(); ++t)
    groups.push_back({{LinkCategory::Table, static_cast<int>(t), s.tables[t].words, stems(s.tables[t].words)}});
  for (std::size_t c = 0; c < s.columns.size(); ++c)
    groups.push_back({{LinkCategory::Column, static_cast<int>(c), s.columns[c].words, stems(s.columns[c].words)}});
  for (std::size_t c = 0; c < s.values.size(); ++c) {
    std::vector<Target> vals;
    for (const auto& v : s.values[c]) {
      auto w = tokenize(v);
      if (!w.empty()) vals.push_back({LinkCategory::Value, static_cast<int>(c), w, stems(w)});
    }
    if (!vals.empty()) groups.push_back(std::move(vals));
  }

  const std::size_t m = question.size();
  std::vector<std::vector<bool>> covered(groups.size(), std::vector<bool>(m, false));
  std::vector<LinkCandidate> out;
  for (std::size_t n = std::min<std::size_t>(5, m); n >= 1; --n) {
    for (std::size_t i = 0; i + n <= m; ++i) {
      std::vector<std::string> span(question.begin() + static_cast<long>(i), question.begin() + static_cast<long>(i + n));
      const auto span_stems = stems(span);
      const bool all_stop = std::all_of(span.begin(), span.end(), [](const auto& w) { return is_stopword(w); });
      for (std::size_t g = 0; g < groups.size(); ++g) {
        if (std::any_of(covered[g].begin() + static_cast<long>(i), covered[g].begin() + static_cast<long>(i + n),
                        [](bool b) { return b; }))
          continue;
        std::optional<MatchGrade> best;
        for (const auto& t : groups[g]) {
          auto gr = grade(span, span_stems, all_stop, t);
          if (gr && (!best || *gr < *best)) best = gr;
          if (best == MatchGrade::Exact) break;
        }
        if (!best) continue;
        out.push_back({i, i + n, groups[g][0].category, groups[g][0].node, *best});
        std::fill(covered[g].begin() + static_cast<long>(i), covered[g].begin() + static_cast<long>(i + n), true);
      }
    }
  }
  return out;
}

Relation link_relation(LinkCategory c, MatchGrade g) {
  const int base = c == LinkCategory::Table ? static_cast<int>(Relation::QtExact)
                   : c == LinkCategory::Column ? static_cast<int>(Relation::QcExact)
                                               : static_cast<int>(Relation::QvExact);
  return static_cast<Relation>(base + static_cast<int>(g));
}

std::size_t node_position(const schema::InputSequence& seq, const LinkCandidate& c) {
  return c.category == LinkCategory::Table ? seq.table_pos.at(c.node) : seq.column_pos.at(c.node);
}

SldModel make_sld(ParameterStore& store, std::size_t d, std::size_t hidden, Rng& rng) {
  return {d, nn::make_linear(store, "sld.hidden", 2 * d, hidden, rng), nn::make_linear(store, "sld.out", hidden, 1, rng)};
}

namespace {

Var mlp(Context& ctx, const SldModel& m, const Var& x) {
  return sigmoid(nn::linear(ctx, m.out, relu(nn::linear(ctx, m.hidden, x))));
}

}  // namespace

Var sld_score(Context& ctx, const SldModel& m, const Var& q, const Var& s) {
  if (q.cols() != m.d || s.cols() != m.d || q.rows() != 1 || s.rows() != 1) {
    throw ShapeError("sld_score: expected two [1," + std::to_string(m.d) + "] vectors, got " +
                     shape_string(q.shape()) + " and " + shape_string(s.shape()));
  }
  Var parts[] = {q, s};
  return mlp(ctx, m, concat(parts, 1));
}

Var sld_scores(Context& ctx, const SldModel& m, const Var& chi, const schema::InputSequence& seq,
               const std::vector<LinkCandidate>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("sld_scores: no candidates");
  std::vector<std::vector<std::size_t>> qs, ss;
  for (const auto& c : candidates) {
    std::vector<std::size_t> span;
    for (std::size_t i = c.start; i < c.end; ++i) span.push_back(seq.question_pos(i));
    qs.push_back(std::move(span));
    ss.push_back({node_position(seq, c)});
  }
  Var parts[] = {matmul(ctx.constant(nn::averaging_matrix(qs, seq.size())), chi),
                 matmul(ctx.constant(nn::averaging_matrix(ss, seq.size())), chi)};
  return mlp(ctx, m, concat(parts, 1));
}

void filter_links(schema::RelationMatrix& r, const schema::InputSequence& seq,
                  const std::vector<LinkCandidate>& candidates, const std::vector<double>& scores, double rho) {
  if (scores.size() != candidates.size()) throw std::invalid_argument("filter_links: one score per candidate");
  auto rank = [](const LinkCandidate& c) { return std::make_pair(c.category == LinkCategory::Value, c.grade); };
  std::map<std::pair<std::size_t, std::size_t>, const LinkCandidate*> best;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (!(scores[k] >= rho)) continue;
    const auto& c = candidates[k];
    const std::size_t node = node_position(seq, c);
    for (std::size_t i = c.start; i < c.end; ++i) {
      auto& slot = best[{seq.question_pos(i), node}];
      if (!slot || rank(c) < rank(*slot)) slot = &c;
    }
  }
  for (const auto& [cell, c] : best) {
    const Relation label = link_relation(c->category, c->grade);
    r.set(cell.first, cell.second, label);
    r.set(cell.second, cell.first, label);
  }
}

std::vector<double> gold_link_labels(const std::vector<LinkCandidate>& candidates, const sql::Query& gold) {
  std::vector<int> tables, columns;
  sql::collect_schema_refs(gold, tables, columns);
  std::vector<double> out;
  for (const auto& c : candidates) {
    const auto& pool = c.category == LinkCategory::Table ? tables : columns;
    out.push_back(std::find(pool.begin(), pool.end(), c.node) != pool.end() ? 1.0 : 0.0);
  }
  return out;
}

std::vector<double> link_weights(const std::vector<double>& labels, LinkWeighting mode) {
  std::vector<double> w(labels.size(), 1.0);
  if (mode == LinkWeighting::Uniform) return w;
  const double n = static_cast<double>(labels.size());
  const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1.0));
  const double neg = n - pos;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double cls = labels[i] == 1.0 ? pos : neg;
    w[i] = n / (2.0 * cls);
  }
  return w;
}

Var sld_loss(const Var& probs, const std::vector<double>& labels, const std::vector<double>& weights) {
  for (double w : weights)
    if (!(w > 0.0)) throw std::invalid_argument("sld_loss: weights must be positive");
  return binary_cross_entropy(probs, labels, weights);
}

}  // namespace mtsql::linking
