#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "mtsql/nn/layers.hpp"
#include "mtsql/ote/ote.hpp"
#include "mtsql/sql/ra.hpp"

namespace mtsql::decoder {

using nn::Context;
using sql::RaOp;
using sql::RaTree;
using tensor::Var;

struct DecoderConfig {
  std::size_t beam = 30;       // K; half schema leaves, half value/constant leaves
  std::size_t max_height = 12;  // T
  std::size_t scorer_layers = 3;
  std::size_t rank = 16;        // bilinear rank of the binary-operator scorer
  std::size_t max_span = 4;     // longest question span used as a value leaf
  double boost = 1.0;           // Rule 2 additive logit
  bool rule1 = true, rule2 = true, rule3 = true;

  void validate() const;
};

// Operator families named by the relationship vocabulary.
enum class Family : std::uint8_t { None, Join, Where, GroupBy, OrderBy, Select };
Family operator_family(RaOp op);

struct GrammarRuleSet {
  std::set<int> tables, columns;  // Rule 1 allowed schema leaves
  std::set<Family> licensed;      // families with at least one predicted relationship
  double boost = 1.0;
  bool rule1 = true, rule2 = true, rule3 = true;

  bool empty() const { return tables.empty() && columns.empty() && licensed.empty(); }
  bool allows_leaf(const RaTree& leaf) const;
};

GrammarRuleSet make_rules(const ote::TripleSet& triples, const schema::InputSequence& seq, const DecoderConfig& config);

// Everything the decoder reads from one encoded input.
struct DecoderInput {
  const schema::SchemaGraph* schema = nullptr;
  const schema::InputSequence* seq = nullptr;
  std::vector<std::string> cased_question;  // same boundaries as the tokenized question
  Var states;                               // encoder h, one row per sequence position
};

struct DecoderModel {
  DecoderConfig config;
  std::size_t d = 0;
  nn::Linear schema_leaf, value_leaf, keep, unary, final_head;
  tensor::ParamId constants = 0;  // [5, d]: *, 1, true, false, unreachable value
  tensor::ParamId left = 0, right = 0, binary_bias = 0;
  tensor::ParamId op_embedding = 0;  // [kRaOpCount, d]
  std::vector<nn::Linear> compose;
  nn::FeedForward leaf_ffn;
  nn::Norm leaf_norm, compose_norm, attend_norm;
  nn::Attention cross;
};

DecoderModel make_decoder(tensor::ParameterStore& store, const DecoderConfig& config, std::size_t d, tensor::Rng& rng);

struct ScoredTree {
  RaTree tree;
  double score = 0.0;  // candidate logit (plus any Rule 2 boost) when it entered the beam
  Var rep;             // [1, d]
};

struct Beam {
  std::vector<RaTree> trees;
  std::vector<double> scores;
  Var reps;  // [size, d]
  std::size_t size() const { return trees.size(); }
  ScoredTree at(std::size_t i) const;
};

// All height-0 candidates: schema leaves, question spans up to max_span words
// and the constants. `schema` marks the schema half of the split.
struct LeafPool {
  std::vector<RaTree> trees;
  std::vector<bool> schema;
  Var reps;    // [N, d]
  Var scores;  // [1, N]
};

LeafPool leaf_pool(Context& ctx, const DecoderModel& m, const DecoderInput& in);

struct StepStats {
  std::size_t fallbacks = 0;
};

// Top K/2 schema leaves (Rule 1 applied, boosted by Rule 2) plus the top
// value/constant leaves filling the rest of K.
Beam select_leaves(const LeafPool& pool, const DecoderModel& m, const GrammarRuleSet& rules, StepStats& stats);

enum class CandidateKind : std::uint8_t { Keep, Unary, Binary };

struct Candidate {
  CandidateKind kind;
  RaOp op;  // ignored for Keep
  std::size_t a = 0, b = 0;
  double boost = 0.0;
};

struct Expansion {
  std::vector<Candidate> candidates;  // after Rule 3
  Var scores;                         // [1, N] model logits, no boost
  bool fallback = false;
};

// Keep transitions for every beam tree plus every well-typed unary or binary
// application whose result has height `step`.
Expansion expand_candidates(Context& ctx, const DecoderModel& m, const Beam& beam, std::size_t step,
                            const GrammarRuleSet& rules);

RaTree candidate_tree(const Beam& beam, const Candidate& c);

// Indices of the k best candidates by model logit plus boost.
std::vector<std::size_t> top_candidates(const Expansion& e, std::size_t k);

// New beam from chosen candidates; kept trees reuse their representation,
// new trees get one from the composition network.
Beam build_beam(Context& ctx, const DecoderModel& m, const DecoderInput& in, const Beam& beam, const Expansion& e,
                const std::vector<std::size_t>& chosen);

struct DecodeResult {
  RaTree tree;
  double score = 0.0;     // final-head logit of the returned tree
  bool forced = false;    // no complete tree appeared; completed by hand
  std::size_t fallbacks = 0;
  std::size_t steps = 0;
  std::map<std::string, double> complete;  // every complete tree seen, by key
};

DecodeResult generate(Context& ctx, const DecoderModel& m, const DecoderInput& in, const GrammarRuleSet& rules);

struct TreeLoss {
  Var loss;
  std::size_t unreachable_leaves = 0;  // gold values with no matching span or constant
};

// Teacher-forced generation loss: multi-positive cross-entropy of gold
// leaves and gold step targets against the candidate scores, plus a binary
// loss on the final head over every complete tree in the beams.
TreeLoss tree_loss(Context& ctx, const DecoderModel& m, const DecoderInput& in, const RaTree& gold);

class DecoderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mtsql::decoder
