#pragma once

#include <string>
#include <vector>

#include "mtsql/encoder/encoder.hpp"
#include "mtsql/schema/relations.hpp"
#include "mtsql/sql/ast.hpp"

namespace mtsql::ote {

using nn::Context;
using tensor::Tensor;
using tensor::Var;

enum class Relationship : std::uint8_t { JoinOnTc, JoinOnCc, WhereTc, GroupByTc, OrderByTc, SelectTc, None };
inline constexpr std::size_t kRelationshipCount = 7;

std::string_view relationship_name(Relationship r);  // "JOIN_ON_TC", ..., "NONE"
Relationship parse_relationship(std::string_view name);

struct OperatorTriple {
  std::size_t s_start = 0, s_end = 0, o_start = 0, o_end = 0;  // positions in the InputSequence
  Relationship r = Relationship::None;
  auto operator<=>(const OperatorTriple&) const = default;
};

using TripleSet = std::vector<OperatorTriple>;  // sorted, no duplicates

class OteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Clause walk over the gold query and all of its subqueries. "*" counts as the
// table itself when FROM has a single table and is skipped otherwise.
TripleSet gold_triples(const sql::Query& q, const schema::SchemaGraph& schema, const schema::InputSequence& seq);

struct OteConfig {
  std::size_t slots = 20;
  std::size_t layers = 4;
  std::size_t heads = 4;
  double dropout = 0.1;
};

struct OteLayer {
  nn::Attention self, cross;
  nn::Norm norm1, norm2, norm3;
  nn::FeedForward ffn;
};

struct OteModel {
  OteConfig config;
  std::size_t d = 0;
  tensor::ParamId queries = 0;  // [slots, d]
  std::vector<OteLayer> layers;
  nn::Linear relation;                        // d -> kRelationshipCount
  nn::Linear s_start, s_end, o_start, o_end;  // pointer projections, d -> d
};

OteModel make_ote(tensor::ParameterStore& store, const OteConfig& config, std::size_t d, tensor::Rng& rng);

// Log-distributions for every slot: relation [Z, 7], spans [Z, L].
struct SlotLogits {
  Var relation, s_start, s_end, o_start, o_end;
};

SlotLogits run_ote(Context& ctx, const OteModel& m, const Var& states);

// Argmax per slot; the span end is the argmax over positions at or after the
// start. Slots predicting NONE are dropped and duplicates merged.
TripleSet decode_triples(const SlotLogits& slots);

// Optimal injective assignment of rows to columns for an m x Z cost matrix,
// m <= Z. assignment[i] is the column of row i.
struct Assignment {
  std::vector<std::size_t> assignment;
  double total = 0.0;
};
Assignment hungarian_match(const std::vector<std::vector<double>>& cost);

// -[log p_r + log p_s_start + log p_s_end + log p_o_start + log p_o_end] for
// slot `slot`; NONE gold costs only its relation term.
double triple_match_cost(const OperatorTriple& gold, const SlotLogits& slots, std::size_t slot);

// Matched slots get the relation and four span terms, the rest are pushed
// toward NONE with span terms masked. Matching runs on detached values over a
// Z x Z matrix whose extra rows are the NONE costs.
Var ote_loss(const TripleSet& gold, const SlotLogits& slots);

// Schema node ids covered by the triples' spans.
struct NodeSet {
  std::vector<int> tables, columns;
};
NodeSet triple_nodes(const TripleSet& triples, const schema::InputSequence& seq);

// {"subject": ..., "object": ..., "relationship": ...} per triple, one per line.
std::string triples_to_jsonl(const TripleSet& triples, const schema::InputSequence& seq,
                             const schema::SchemaGraph& schema);

}  // namespace mtsql::ote
