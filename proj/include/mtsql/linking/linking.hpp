#pragma once

#include <string>
#include <vector>

#include "mtsql/nn/layers.hpp"
#include "mtsql/schema/relations.hpp"
#include "mtsql/sql/ast.hpp"

namespace mtsql::linking {

using nn::Context;
using tensor::Var;

enum class LinkCategory : std::uint8_t { Table, Column, Value };
enum class MatchGrade : std::uint8_t { Exact, Partial, StemPartial };

std::string_view category_name(LinkCategory c);
std::string_view grade_name(MatchGrade g);

struct LinkCandidate {
  std::size_t start = 0, end = 0;  // question words [start, end)
  LinkCategory category = LinkCategory::Column;
  int node = -1;  // table id for Table, column id for Column and Value
  MatchGrade grade = MatchGrade::Exact;
  bool operator==(const LinkCandidate&) const = default;
};

// Greedy n-gram matching, n = 5 down to 1. For each (span, node) the best of
// exact / partial (contiguous sub-sequence of the name) / stem-partial is
// kept; a smaller n-gram overlapping an earlier match of the same node is
// skipped. Ties across nodes are all emitted. Partial grades ignore spans made
// only of stopwords. Value links need schema.values.
std::vector<LinkCandidate> candidate_links(const std::vector<std::string>& question, const schema::SchemaGraph& schema);

schema::Relation link_relation(LinkCategory c, MatchGrade g);
std::size_t node_position(const schema::InputSequence& seq, const LinkCandidate& c);

struct SldModel {
  std::size_t d = 0;
  nn::Linear hidden, out;
};

SldModel make_sld(tensor::ParameterStore& store, std::size_t d, std::size_t hidden, tensor::Rng& rng);

// Probability for one (question vector, schema vector) pair, both [1, d].
Var sld_score(Context& ctx, const SldModel& m, const Var& q, const Var& s);

// Batched scores [M, 1] from pre-encoder embeddings chi: question side is the
// mean of the span rows, schema side is the node row.
Var sld_scores(Context& ctx, const SldModel& m, const Var& chi, const schema::InputSequence& seq,
               const std::vector<LinkCandidate>& candidates);

// Writes candidates with score >= rho into the question/schema cells of `r`,
// same label in both directions. When several candidates hit one cell the
// schema-name match beats a value match, then the better grade wins.
void filter_links(schema::RelationMatrix& r, const schema::InputSequence& seq,
                  const std::vector<LinkCandidate>& candidates, const std::vector<double>& scores, double rho);

// 1 when the candidate's table/column occurs anywhere in the gold query.
std::vector<double> gold_link_labels(const std::vector<LinkCandidate>& candidates, const sql::Query& gold);

enum class LinkWeighting { Uniform, Balanced };
// Balanced: w_i = N / (2 N_{class(y_i)}).
std::vector<double> link_weights(const std::vector<double>& labels, LinkWeighting mode);

// Sum_i -w_i [y_i log p_i + (1 - y_i) log(1 - p_i)], p clamped to [1e-12, 1 - 1e-12].
Var sld_loss(const Var& probs, const std::vector<double>& labels, const std::vector<double>& weights);

}  // namespace mtsql::linking
