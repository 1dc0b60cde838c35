#include "mtsql/decoder/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <unordered_map>

#include "mtsql/linking/text.hpp"

namespace mtsql::decoder {

using namespace tensor;
using sql::Sort;

void DecoderConfig::validate() const {
  if (beam < 2 || beam % 2 != 0) throw std::invalid_argument("decoder: beam size K must be even and >= 2");
  if (max_height < 1) throw std::invalid_argument("decoder: max height T must be >= 1");
  if (scorer_layers < 1) throw std::invalid_argument("decoder: scorer needs at least one layer");
  if (rank < 1 || max_span < 1) throw std::invalid_argument("decoder: rank and max_span must be positive");
  if (!std::isfinite(boost)) throw std::invalid_argument("decoder: boost must be finite");
}

Family operator_family(RaOp op) {
  switch (op) {
    case RaOp::Product: case RaOp::On: return Family::Join;
    case RaOp::Selection: case RaOp::Having: return Family::Where;
    case RaOp::GroupBy: return Family::GroupBy;
    case RaOp::OrderAsc: case RaOp::OrderDesc: return Family::OrderBy;
    case RaOp::Projection: case RaOp::ProjectDistinct: return Family::Select;
    default: return Family::None;
  }
}

bool GrammarRuleSet::allows_leaf(const RaTree& leaf) const {
  if (leaf->op == RaOp::Table) return tables.count(leaf->ref) > 0;
  if (leaf->op == RaOp::Column) return columns.count(leaf->ref) > 0;
  return true;
}

GrammarRuleSet make_rules(const ote::TripleSet& triples, const schema::InputSequence& seq, const DecoderConfig& config) {
  GrammarRuleSet r;
  r.boost = config.boost;
  r.rule1 = config.rule1;
  r.rule2 = config.rule2;
  r.rule3 = config.rule3;
  const auto nodes = ote::triple_nodes(triples, seq);
  r.tables.insert(nodes.tables.begin(), nodes.tables.end());
  r.columns.insert(nodes.columns.begin(), nodes.columns.end());
  for (const auto& t : triples) {
    switch (t.r) {
      case ote::Relationship::JoinOnTc: case ote::Relationship::JoinOnCc: r.licensed.insert(Family::Join); break;
      case ote::Relationship::WhereTc: r.licensed.insert(Family::Where); break;
      case ote::Relationship::GroupByTc: r.licensed.insert(Family::GroupBy); break;
      case ote::Relationship::OrderByTc: r.licensed.insert(Family::OrderBy); break;
      case ote::Relationship::SelectTc: r.licensed.insert(Family::Select); break;
      case ote::Relationship::None: break;
    }
  }
  return r;
}

namespace {

constexpr RaOp kUnary[] = {RaOp::Count, RaOp::Sum,      RaOp::Avg,     RaOp::Min,
                           RaOp::Max,   RaOp::Distinct, RaOp::Derived, RaOp::Not};
constexpr std::size_t kUnaryCount = std::size(kUnary);

const std::vector<RaOp>& binary_ops() {
  static const std::vector<RaOp> ops = [] {
    std::vector<RaOp> out;
    for (std::size_t i = 0; i < sql::kRaOpCount; ++i)
      if (sql::ra_arity(static_cast<RaOp>(i)) == 2) out.push_back(static_cast<RaOp>(i));
    return out;
  }();
  return ops;
}

enum ConstRow : std::size_t { kStarRow, kOneRow, kTrueRow, kFalseRow, kUnknownRow, kConstRows };

Tensor selection(const std::vector<std::size_t>& rows, std::size_t width) {
  Tensor t({rows.size(), width}, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) t.at(r, rows[r]) = 1.0;
  return t;
}

// Rows of `x` picked by index (a 0/1 selection product keeps gradients).
Var take_rows(Context& ctx, const Var& x, const std::vector<std::size_t>& rows) {
  return matmul(ctx.constant(selection(rows, x.rows())), x);
}

bool is_number(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(v);
}

// Schema column leaves reachable without entering a nested complete query.
bool direct_column(const RaTree& t) {
  if (t->op == RaOp::Column) return true;
  if (sql::is_complete(t->sort) || t->op == RaOp::Derived) return false;
  return std::any_of(t->kids.begin(), t->kids.end(), direct_column);
}

// The child carrying the operator's schema content.
const RaTree* key_child(RaOp op, const RaTree& a, const RaTree& b) {
  switch (op) {
    case RaOp::On: case RaOp::Selection: case RaOp::Having: case RaOp::GroupBy:
    case RaOp::Projection: case RaOp::ProjectDistinct:
      return &a;
    case RaOp::OrderAsc: case RaOp::OrderDesc:
      return &b;
    default:
      return nullptr;
  }
}

// Rule 3 drops the application when its family is unlicensed and the key
// child mentions a schema column.
bool rule3_blocks(const GrammarRuleSet& rules, RaOp op, const RaTree& a, const RaTree& b) {
  const Family f = operator_family(op);
  if (f == Family::None || rules.licensed.count(f)) return false;
  const RaTree* key = key_child(op, a, b);
  return key && direct_column(*key);
}

// sum_p -log( e^{s_p} / (e^{s_p} + sum_{n in negatives} e^{s_n}) )
Var multi_positive(Context& ctx, const Var& scores, const std::vector<std::size_t>& positives,
                   const std::vector<std::size_t>& universe) {
  std::vector<bool> pos(scores.cols(), false);
  for (auto p : positives) pos[p] = true;
  std::vector<std::size_t> neg;
  for (auto u : universe)
    if (!pos[u]) neg.push_back(u);
  if (positives.empty() || neg.empty()) return ctx.constant(Tensor::scalar(0.0));
  const std::size_t width = 1 + neg.size();
  std::vector<std::size_t> index;
  for (auto p : positives) {
    index.push_back(p);
    index.insert(index.end(), neg.begin(), neg.end());
  }
  Var tiled = matmul(ctx.constant(Tensor({positives.size(), 1}, 1.0)), scores);
  std::vector<std::size_t> zeros(positives.size(), 0);
  return cross_entropy(gather_cols(tiled, index, width), zeros);
}

std::vector<std::size_t> ranked(const std::vector<double>& scores, const std::vector<std::size_t>& ids) {
  std::vector<std::size_t> out = ids;
  std::stable_sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return out;
}

}  // namespace

DecoderModel make_decoder(ParameterStore& store, const DecoderConfig& config, std::size_t d, Rng& rng) {
  config.validate();
  DecoderModel m;
  m.config = config;
  m.d = d;
  m.schema_leaf = nn::make_linear(store, "dec.schema_leaf", d, 1, rng);
  m.value_leaf = nn::make_linear(store, "dec.value_leaf", d, 1, rng);
  m.keep = nn::make_linear(store, "dec.keep", d, 1, rng);
  m.unary = nn::make_linear(store, "dec.unary", d, kUnaryCount, rng);
  m.final_head = nn::make_linear(store, "dec.final", d, 1, rng);
  m.constants = store.add("dec.constants", xavier_uniform(kConstRows, d, rng));
  const std::size_t nb = binary_ops().size();
  m.left = store.add("dec.left", xavier_uniform(d, nb * config.rank, rng));
  m.right = store.add("dec.right", xavier_uniform(d, nb * config.rank, rng));
  m.binary_bias = store.add("dec.binary_bias", Tensor({1, nb}, 0.0));
  m.op_embedding = store.add("dec.op_embedding", xavier_uniform(sql::kRaOpCount, d, rng));
  for (std::size_t l = 0; l < config.scorer_layers; ++l)
    m.compose.push_back(nn::make_linear(store, "dec.compose" + std::to_string(l), l == 0 ? 3 * d : d, d, rng));
  m.leaf_ffn = nn::make_ffn(store, "dec.leaf_ffn", d, 2 * d, rng);
  m.leaf_norm = nn::make_norm(store, "dec.leaf_norm", d);
  m.compose_norm = nn::make_norm(store, "dec.compose_norm", d);
  m.attend_norm = nn::make_norm(store, "dec.attend_norm", d);
  m.cross = nn::make_attention(store, "dec.cross", d, 1, rng);
  return m;
}

ScoredTree Beam::at(std::size_t i) const { return {trees.at(i), scores.at(i), slice(reps, 0, i, i + 1)}; }

LeafPool leaf_pool(Context& ctx, const DecoderModel& m, const DecoderInput& in) {
  const auto& s = *in.schema;
  const auto& seq = *in.seq;
  if (in.states.cols() != m.d) throw ShapeError("leaf_pool: encoder width does not match decoder width");
  if (in.cased_question.size() != seq.question_length)
    throw DecoderError("leaf_pool: cased question has " + std::to_string(in.cased_question.size()) + " words, sequence has " +
                       std::to_string(seq.question_length));
  LeafPool pool;
  std::set<std::string> keys;
  std::vector<std::size_t> schema_rows;
  for (std::size_t t = 0; t < s.tables.size(); ++t) {
    pool.trees.push_back(sql::ra_table(static_cast<int>(t)));
    schema_rows.push_back(seq.table_pos[t]);
  }
  for (std::size_t c = 0; c < s.columns.size(); ++c) {
    pool.trees.push_back(sql::ra_column(static_cast<int>(c)));
    schema_rows.push_back(seq.column_pos[c]);
  }
  pool.schema.assign(pool.trees.size(), true);

  // Question spans; multi-word spans may not start or end on a stopword.
  std::vector<std::vector<std::size_t>> spans;
  const std::size_t len = seq.question_length;
  for (std::size_t n = 1; n <= m.config.max_span; ++n) {
    for (std::size_t i = 0; i + n <= len; ++i) {
      const auto& first = seq.nodes[seq.question_pos(i)].words[0];
      const auto& last = seq.nodes[seq.question_pos(i + n - 1)].words[0];
      if (linking::is_stopword(first) || (n > 1 && linking::is_stopword(last))) continue;
      std::string text;
      std::vector<std::size_t> rows;
      for (std::size_t k = i; k < i + n; ++k) {
        text += (k > i ? " " : "") + in.cased_question[k];
        rows.push_back(seq.question_pos(k));
      }
      auto leaf = sql::ra_value({text, !is_number(text)});
      if (!keys.insert(leaf->key).second) continue;
      pool.trees.push_back(leaf);
      pool.schema.push_back(false);
      spans.push_back(std::move(rows));
    }
  }
  std::vector<std::size_t> const_rows;
  const std::pair<RaTree, std::size_t> constants[] = {{sql::ra_star(), kStarRow},
                                                      {sql::ra_value({"1", false}), kOneRow},
                                                      {sql::ra_value({"true", false}), kTrueRow},
                                                      {sql::ra_value({"false", false}), kFalseRow}};
  for (const auto& [leaf, row] : constants) {
    if (!keys.insert(leaf->key).second) continue;
    pool.trees.push_back(leaf);
    pool.schema.push_back(false);
    const_rows.push_back(row);
  }

  Var schema_reps = take_rows(ctx, in.states, schema_rows);
  std::vector<Var> value_parts;
  if (!spans.empty()) value_parts.push_back(matmul(ctx.constant(nn::averaging_matrix(spans, seq.size())), in.states));
  value_parts.push_back(take_rows(ctx, ctx(m.constants), const_rows));
  Var value_reps = value_parts.size() == 1 ? value_parts[0] : concat(value_parts, 0);
  // decoder-side leaf features: residual feed-forward over the encoder rows
  auto project = [&](const Var& x) { return nn::norm(ctx, m.leaf_norm, add(x, nn::ffn(ctx, m.leaf_ffn, x, 0.0))); };
  schema_reps = project(schema_reps);
  value_reps = project(value_reps);
  Var reps[] = {schema_reps, value_reps};
  pool.reps = concat(reps, 0);
  Var scores[] = {nn::linear(ctx, m.schema_leaf, schema_reps), nn::linear(ctx, m.value_leaf, value_reps)};
  pool.scores = transpose(concat(scores, 0));
  return pool;
}

namespace {

// Indices for the leaf beam plus the boosted scores used for ranking.
struct LeafChoice {
  std::vector<std::size_t> chosen;
  std::vector<double> ranked_scores;
  bool fallback = false;
};

LeafChoice choose_leaves(const LeafPool& pool, std::size_t k, const GrammarRuleSet& rules) {
  LeafChoice out;
  const std::size_t n = pool.trees.size();
  out.ranked_scores.resize(n);
  std::vector<std::size_t> schema_ids, value_ids;
  for (std::size_t i = 0; i < n; ++i) {
    const bool listed = !rules.empty() && pool.schema[i] && rules.allows_leaf(pool.trees[i]);
    out.ranked_scores[i] = pool.scores.value()[i] + (rules.rule2 && listed ? rules.boost : 0.0);
    (pool.schema[i] ? schema_ids : value_ids).push_back(i);
  }
  const bool rule1 = rules.rule1 && !(rules.tables.empty() && rules.columns.empty());
  if (rule1) {
    std::vector<std::size_t> kept;
    for (auto i : schema_ids)
      if (rules.allows_leaf(pool.trees[i])) kept.push_back(i);
    if (kept.empty() && !schema_ids.empty()) out.fallback = true;
    else schema_ids = std::move(kept);
  }
  auto schema_rank = ranked(out.ranked_scores, schema_ids);
  auto value_rank = ranked(out.ranked_scores, value_ids);
  const std::size_t ns = std::min(k / 2, schema_rank.size());
  out.chosen.assign(schema_rank.begin(), schema_rank.begin() + static_cast<long>(ns));
  const std::size_t nv = std::min(k - ns, value_rank.size());
  out.chosen.insert(out.chosen.end(), value_rank.begin(), value_rank.begin() + static_cast<long>(nv));
  return out;
}

}  // namespace

Beam select_leaves(const LeafPool& pool, const DecoderModel& m, const GrammarRuleSet& rules, StepStats& stats) {
  auto choice = choose_leaves(pool, m.config.beam, rules);
  if (choice.fallback) ++stats.fallbacks;
  Beam b;
  for (auto i : choice.chosen) {
    b.trees.push_back(pool.trees[i]);
    b.scores.push_back(choice.ranked_scores[i]);
  }
  b.reps = matmul(pool.reps.graph().constant(selection(choice.chosen, pool.trees.size())), pool.reps);
  return b;
}

Expansion expand_candidates(Context& ctx, const DecoderModel& m, const Beam& beam, std::size_t step,
                            const GrammarRuleSet& rules) {
  if (beam.size() == 0) throw DecoderError("expand_candidates: empty beam");
  const std::size_t n = beam.size();
  const int target = static_cast<int>(step) - 1;
  const bool rule3 = rules.rule3 && !rules.licensed.empty();
  const auto& bops = binary_ops();

  Expansion e;
  std::vector<Candidate> fresh, blocked;
  auto consider = [&](Candidate c, bool blocked_here) { (blocked_here ? blocked : fresh).push_back(c); };
  for (std::size_t i = 0; i < n; ++i) {
    if (beam.trees[i]->height != target) continue;
    for (std::size_t u = 0; u < kUnaryCount; ++u)
      if (sql::result_sort(kUnary[u], beam.trees[i].get(), nullptr)) consider({CandidateKind::Unary, kUnary[u], i, 0}, false);
  }
  for (std::size_t o = 0; o < bops.size(); ++o) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const auto &a = beam.trees[i], &b = beam.trees[j];
        if (std::max(a->height, b->height) != target) continue;
        if (!sql::result_sort(bops[o], a.get(), b.get())) continue;
        consider({CandidateKind::Binary, bops[o], i, j}, rule3 && rule3_blocks(rules, bops[o], a, b));
      }
    }
  }
  if (fresh.empty() && !blocked.empty()) {
    e.fallback = true;
    fresh.insert(fresh.end(), blocked.begin(), blocked.end());
    std::stable_sort(fresh.begin(), fresh.end(), [&](const Candidate& x, const Candidate& y) {
      return std::tuple(x.kind, x.op, x.a, x.b) < std::tuple(y.kind, y.op, y.a, y.b);
    });
  }
  for (std::size_t i = 0; i < n; ++i) e.candidates.push_back({CandidateKind::Keep, RaOp::Table, i, 0});
  for (auto& c : fresh) {
    if (rules.rule2 && rules.licensed.count(operator_family(c.op))) c.boost = rules.boost;
    e.candidates.push_back(c);
  }

  // Scores in candidate order: keep, unary, then binary grouped by operator.
  const Var& r = beam.reps;
  std::vector<Var> parts;
  std::vector<std::size_t> keep_idx, unary_idx;
  for (const auto& c : e.candidates) {
    if (c.kind == CandidateKind::Keep) keep_idx.push_back(c.a);
    if (c.kind == CandidateKind::Unary) {
      const auto u = static_cast<std::size_t>(std::find(std::begin(kUnary), std::end(kUnary), c.op) - std::begin(kUnary));
      unary_idx.push_back(c.a * kUnaryCount + u);
    }
  }
  parts.push_back(pick(nn::linear(ctx, m.keep, r), keep_idx));
  if (!unary_idx.empty()) parts.push_back(pick(nn::linear(ctx, m.unary, r), unary_idx));
  Var left, right;
  bool projected = false;
  std::size_t k = keep_idx.size() + unary_idx.size();
  while (k < e.candidates.size()) {
    const RaOp op = e.candidates[k].op;
    const auto o = static_cast<std::size_t>(std::find(bops.begin(), bops.end(), op) - bops.begin());
    std::vector<std::size_t> cells, bias;
    for (; k < e.candidates.size() && e.candidates[k].op == op; ++k) {
      cells.push_back(e.candidates[k].a * n + e.candidates[k].b);
      bias.push_back(o);
    }
    if (!projected) {
      left = matmul(r, ctx(m.left));
      right = matmul(r, ctx(m.right));
      projected = true;
    }
    const std::size_t rk = m.config.rank;
    Var grid = matmul(slice(left, 1, o * rk, (o + 1) * rk), transpose(slice(right, 1, o * rk, (o + 1) * rk)));
    parts.push_back(add(pick(grid, cells), pick(ctx(m.binary_bias), bias)));
  }
  e.scores = parts.size() == 1 ? parts[0] : concat(parts, 1);
  return e;
}

RaTree candidate_tree(const Beam& beam, const Candidate& c) {
  switch (c.kind) {
    case CandidateKind::Keep: return beam.trees.at(c.a);
    case CandidateKind::Unary: return sql::ra_node(c.op, {beam.trees.at(c.a)});
    case CandidateKind::Binary: return sql::ra_node(c.op, {beam.trees.at(c.a), beam.trees.at(c.b)});
  }
  return nullptr;
}

Beam build_beam(Context& ctx, const DecoderModel& m, const DecoderInput& in, const Beam& beam, const Expansion& e,
                const std::vector<std::size_t>& chosen) {
  Beam out;
  std::vector<std::size_t> kept_rows, new_a, new_ops;
  std::vector<std::optional<std::size_t>> new_b;
  std::vector<RaTree> new_trees;
  std::vector<double> new_scores;
  for (auto k : chosen) {
    const auto& c = e.candidates.at(k);
    const double score = e.scores.value()[k] + c.boost;
    if (c.kind == CandidateKind::Keep) {
      kept_rows.push_back(c.a);
      out.trees.push_back(beam.trees[c.a]);
      out.scores.push_back(score);
    } else {
      new_a.push_back(c.a);
      new_b.push_back(c.kind == CandidateKind::Binary ? std::optional(c.b) : std::nullopt);
      new_ops.push_back(static_cast<std::size_t>(c.op));
      new_trees.push_back(candidate_tree(beam, c));
      new_scores.push_back(score);
    }
  }
  std::vector<Var> parts;
  if (!kept_rows.empty()) parts.push_back(take_rows(ctx, beam.reps, kept_rows));
  if (!new_a.empty()) {
    Tensor sel_b({new_b.size(), beam.size()}, 0.0);
    for (std::size_t r = 0; r < new_b.size(); ++r)
      if (new_b[r]) sel_b.at(r, *new_b[r]) = 1.0;
    Var x[] = {take_rows(ctx, beam.reps, new_a), matmul(ctx.constant(sel_b), beam.reps),
               embedding_lookup(ctx(m.op_embedding), new_ops)};
    Var h = concat(x, 1);
    for (std::size_t l = 0; l < m.compose.size(); ++l) {
      h = nn::linear(ctx, m.compose[l], h);
      if (l + 1 < m.compose.size()) h = relu(h);
    }
    h = nn::norm(ctx, m.compose_norm, h);
    h = nn::norm(ctx, m.attend_norm, add(h, nn::attend(ctx, m.cross, h, in.states, 0.0)));
    parts.push_back(h);
    out.trees.insert(out.trees.end(), new_trees.begin(), new_trees.end());
    out.scores.insert(out.scores.end(), new_scores.begin(), new_scores.end());
  }
  out.reps = parts.size() == 1 ? parts[0] : concat(parts, 0);
  return out;
}

std::vector<std::size_t> top_candidates(const Expansion& e, std::size_t k) {
  std::vector<double> ranked_scores(e.candidates.size());
  for (std::size_t i = 0; i < e.candidates.size(); ++i) ranked_scores[i] = e.scores.value()[i] + e.candidates[i].boost;
  std::vector<std::size_t> ids(e.candidates.size());
  std::iota(ids.begin(), ids.end(), 0);
  auto order = ranked(ranked_scores, ids);
  order.resize(std::min(k, order.size()));
  return order;
}

namespace {

// Final-head logits for the complete trees of a beam.
std::vector<std::pair<std::size_t, double>> final_scores(Context& ctx, const DecoderModel& m, const Beam& b) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (sql::is_complete(b.trees[i]->sort)) rows.push_back(i);
  std::vector<std::pair<std::size_t, double>> out;
  if (rows.empty()) return out;
  Var logits = nn::linear(ctx, m.final_head, take_rows(ctx, b.reps, rows));
  for (std::size_t r = 0; r < rows.size(); ++r) out.push_back({rows[r], logits.value()[r]});
  return out;
}

int first_table(const RaTree& t) {
  if (t->op == RaOp::Table) return t->ref;
  for (const auto& k : t->kids) {
    const int r = first_table(k);
    if (r >= 0) return r;
  }
  return -1;
}

int first_column(const RaTree& t) {
  if (t->op == RaOp::Column) return t->ref;
  for (const auto& k : t->kids) {
    const int r = first_column(k);
    if (r >= 0) return r;
  }
  return -1;
}

// Wraps the best incomplete beam tree into a query.
// Tables added here stay inside the Rule 1 allowed set when there is one.
std::pair<RaTree, std::size_t> force_complete(const Beam& b, const schema::SchemaGraph& schema,
                                              const GrammarRuleSet& rules) {
  std::vector<std::size_t> ids(b.size());
  std::iota(ids.begin(), ids.end(), 0);
  auto order = ranked(b.scores, ids);
  const bool restricted = rules.rule1 && !rules.tables.empty();
  auto allowed = [&](int table) { return !restricted || rules.tables.count(table) > 0; };
  int fallback_table = -1;
  for (auto i : order)
    if (b.trees[i]->op == RaOp::Table && allowed(b.trees[i]->ref)) {
      fallback_table = b.trees[i]->ref;
      break;
    }
  if (fallback_table < 0) fallback_table = restricted ? *rules.tables.begin() : 0;
  auto table_for = [&](const RaTree& t) {
    const int c = first_column(t);
    return sql::ra_table(c >= 0 && allowed(schema.columns[c].table) ? schema.columns[c].table : fallback_table);
  };
  for (auto i : order) {
    const RaTree& t = b.trees[i];
    switch (t->sort) {
      case Sort::Rel: case Sort::Filtered: case Sort::Grouped: case Sort::HavingRel:
        return {sql::ra_node(RaOp::Projection, {sql::ra_star(), t}), i};
      case Sort::Col: case Sort::Agg: case Sort::List: case Sort::Star: {
        const int tab = first_table(t);
        RaTree rel = tab >= 0 ? sql::ra_table(tab) : table_for(t);
        return {sql::ra_node(RaOp::Projection, {t, rel}), i};
      }
      case Sort::Pred:
        return {sql::ra_node(RaOp::Projection, {sql::ra_star(), sql::ra_node(RaOp::Selection, {t, table_for(t)})}), i};
      default:
        break;
    }
  }
  return {sql::ra_node(RaOp::Projection, {sql::ra_star(), sql::ra_table(fallback_table)}), order.empty() ? 0 : order[0]};
}

}  // namespace

DecodeResult generate(Context& ctx, const DecoderModel& m, const DecoderInput& in, const GrammarRuleSet& rules) {
  DecodeResult res;
  StepStats stats;
  LeafPool pool = leaf_pool(ctx, m, in);
  Beam beam = select_leaves(pool, m, rules, stats);
  std::map<std::string, RaTree> complete_trees;
  auto record = [&](const Beam& b) {
    for (auto [i, s] : final_scores(ctx, m, b)) {
      auto [it, fresh] = res.complete.emplace(b.trees[i]->key, s);
      if (fresh) complete_trees.emplace(b.trees[i]->key, b.trees[i]);
      else it->second = std::max(it->second, s);
    }
  };
  for (std::size_t step = 1; step <= m.config.max_height; ++step) {
    record(beam);
    if (step > 1) {
      const auto top = static_cast<std::size_t>(std::max_element(beam.scores.begin(), beam.scores.end()) - beam.scores.begin());
      const auto it = res.complete.find(beam.trees[top]->key);
      if (it != res.complete.end() && it->second >= 0.0) break;
    }
    Expansion e = expand_candidates(ctx, m, beam, step, rules);
    if (e.fallback) ++stats.fallbacks;
    beam = build_beam(ctx, m, in, beam, e, top_candidates(e, m.config.beam));
    res.steps = step;
  }
  record(beam);
  res.fallbacks = stats.fallbacks;
  if (res.complete.empty()) {
    auto [tree, from] = force_complete(beam, *in.schema, rules);
    res.tree = tree;
    res.forced = true;
    res.score = nn::linear(ctx, m.final_head, slice(beam.reps, 0, from, from + 1)).value().item();
    return res;
  }
  // highest final score; ties go to the smaller canonical key
  auto best = res.complete.begin();
  for (auto it = res.complete.begin(); it != res.complete.end(); ++it)
    if (it->second > best->second) best = it;
  res.tree = complete_trees.at(best->first);
  res.score = best->second;
  return res;
}

TreeLoss tree_loss(Context& ctx, const DecoderModel& m, const DecoderInput& in, const RaTree& gold) {
  const std::size_t height = static_cast<std::size_t>(gold->height);
  if (height > m.config.max_height) {
    throw DecoderError("gold tree height " + std::to_string(height) + " exceeds max height T=" +
                       std::to_string(m.config.max_height) + "; raise T");
  }
  TreeLoss out;
  const auto subs = sql::subtrees(gold);
  std::unordered_map<std::string, int> parent_height;
  for (const auto& s : subs)
    for (const auto& k : s->kids) parent_height[k->key] = std::max(parent_height[k->key], s->height);

  // Leaves: multi-positive loss within each half of the split.
  LeafPool pool = leaf_pool(ctx, m, in);
  std::unordered_map<std::string, std::size_t> pool_index;
  for (std::size_t i = 0; i < pool.trees.size(); ++i) pool_index.emplace(pool.trees[i]->key, i);
  std::vector<std::size_t> gold_schema, gold_value, schema_ids, value_ids;
  std::vector<RaTree> unreachable;
  for (std::size_t i = 0; i < pool.trees.size(); ++i) (pool.schema[i] ? schema_ids : value_ids).push_back(i);
  for (const auto& s : subs) {
    if (s->height != 0) continue;
    auto it = pool_index.find(s->key);
    if (it == pool_index.end()) {
      unreachable.push_back(s);
      continue;
    }
    (pool.schema[it->second] ? gold_schema : gold_value).push_back(it->second);
  }
  out.unreachable_leaves = unreachable.size();
  Var loss = add(multi_positive(ctx, pool.scores, gold_schema, schema_ids),
                 multi_positive(ctx, pool.scores, gold_value, value_ids));

  auto choice = choose_leaves(pool, m.config.beam, GrammarRuleSet{});
  std::vector<std::size_t> chosen = choice.chosen;
  for (auto g : gold_schema)
    if (std::find(chosen.begin(), chosen.end(), g) == chosen.end()) chosen.push_back(g);
  for (auto g : gold_value)
    if (std::find(chosen.begin(), chosen.end(), g) == chosen.end()) chosen.push_back(g);
  Beam beam;
  for (auto i : chosen) {
    beam.trees.push_back(pool.trees[i]);
    beam.scores.push_back(pool.scores.value()[i]);
  }
  beam.reps = take_rows(ctx, pool.reps, chosen);
  if (!unreachable.empty()) {
    std::vector<std::size_t> rows(unreachable.size(), kUnknownRow);
    Var parts[] = {beam.reps, take_rows(ctx, ctx(m.constants), rows)};
    beam.reps = concat(parts, 0);
    for (const auto& u : unreachable) {
      beam.trees.push_back(u);
      beam.scores.push_back(0.0);
    }
  }

  const GrammarRuleSet inert;
  std::vector<Var> final_reps;
  std::vector<double> final_labels;
  std::set<std::string> final_seen;
  for (std::size_t step = 1; step <= height; ++step) {
    Expansion e = expand_candidates(ctx, m, beam, step, inert);
    std::unordered_map<std::string, std::size_t> beam_index;
    for (std::size_t i = 0; i < beam.size(); ++i) beam_index.emplace(beam.trees[i]->key, i);
    std::map<std::tuple<CandidateKind, RaOp, std::size_t, std::size_t>, std::size_t> cand_index;
    for (std::size_t k = 0; k < e.candidates.size(); ++k) {
      const auto& c = e.candidates[k];
      cand_index.emplace(std::tuple(c.kind, c.kind == CandidateKind::Keep ? RaOp::Table : c.op, c.a, c.b), k);
    }
    std::vector<std::size_t> targets;
    for (const auto& s : subs) {
      std::optional<std::tuple<CandidateKind, RaOp, std::size_t, std::size_t>> want;
      if (static_cast<std::size_t>(s->height) == step) {
        const std::size_t a = beam_index.at(s->kids[0]->key);
        if (s->kids.size() == 1) want = std::tuple(CandidateKind::Unary, s->op, a, std::size_t{0});
        else want = std::tuple(CandidateKind::Binary, s->op, a, beam_index.at(s->kids[1]->key));
      } else if (static_cast<std::size_t>(s->height) < step && parent_height.count(s->key) &&
                 static_cast<std::size_t>(parent_height.at(s->key)) > step) {
        want = std::tuple(CandidateKind::Keep, RaOp::Table, beam_index.at(s->key), std::size_t{0});
      }
      if (!want) continue;
      auto it = cand_index.find(*want);
      if (it == cand_index.end()) throw DecoderError("gold subtree missing from candidates: " + s->key);
      targets.push_back(it->second);
    }
    std::vector<std::size_t> all(e.candidates.size());
    std::iota(all.begin(), all.end(), 0);
    loss = add(loss, multi_positive(ctx, e.scores, targets, all));

    auto picked = top_candidates(e, m.config.beam);
    for (auto t : targets)
      if (std::find(picked.begin(), picked.end(), t) == picked.end()) picked.push_back(t);
    beam = build_beam(ctx, m, in, beam, e, picked);
    for (std::size_t i = 0; i < beam.size(); ++i) {
      if (!sql::is_complete(beam.trees[i]->sort) || !final_seen.insert(beam.trees[i]->key).second) continue;
      final_reps.push_back(slice(beam.reps, 0, i, i + 1));
      final_labels.push_back(beam.trees[i]->key == gold->key ? 1.0 : 0.0);
    }
  }
  if (!final_reps.empty()) {
    Var probs = sigmoid(nn::linear(ctx, m.final_head, final_reps.size() == 1 ? final_reps[0] : concat(final_reps, 0)));
    std::vector<double> w(final_labels.size(), 1.0);
    loss = add(loss, binary_cross_entropy(probs, final_labels, w));
  }
  out.loss = loss;
  return out;
}

}  // namespace mtsql::decoder
