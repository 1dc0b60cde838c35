#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtsql/eval/dataset.hpp"
#include "mtsql/train/config.hpp"

namespace mtsql::train {

using tensor::Var;

// Everything derived from a question and its schema, no gold needed.
struct PreparedInput {
  const schema::SchemaGraph* schema = nullptr;
  std::vector<std::string> words;   // tokenized, lowercased
  std::vector<std::string> cased;   // same boundaries, original casing
  schema::InputSequence seq;
  schema::RelationMatrix base;      // schema relations, links not yet filled in
  std::vector<linking::LinkCandidate> candidates;
};

PreparedInput prepare_input(std::string_view question, const schema::SchemaGraph& schema);

struct PreparedExample {
  std::string id;  // "<db_id>#<index in the source file>"
  eval::Example source;
  PreparedInput input;
  sql::QueryPtr gold;
  sql::RaTree gold_tree;
  std::vector<double> link_labels;
  ote::TripleSet triples;
};

struct PrepareReport {
  std::size_t input = 0, kept = 0, unknown_db = 0, unparsable = 0;
};

// Examples whose database is unknown or whose gold SQL does not parse are
// skipped and counted.
std::vector<PreparedExample> prepare_examples(const std::vector<eval::Example>& examples,
                                              const eval::SchemaIndex& schemas, PrepareReport* report = nullptr);

nlohmann::json to_json(const PreparedExample& ex);

// Question words and schema node words in first-seen order.
encoder::Vocabulary build_vocabulary(const std::vector<PreparedExample>& examples);

struct Model {
  TrainConfig config;
  encoder::Vocabulary vocab;
  tensor::ParameterStore store;
  encoder::EncoderParams encoder;
  linking::SldModel sld;
  ote::OteModel ote;
  decoder::DecoderModel decoder;
  std::size_t encoder_params = 0;  // ids [0, encoder_params) belong to the shared encoder
};

// Parameters initialized from config.seed.
Model make_model(const TrainConfig& config, encoder::Vocabulary vocab);

// L = L_delta + lambda L_alpha + mu L_beta.
Var total_loss(const Var& delta, const Var& alpha, const Var& beta, double lambda, double mu);

enum class LinkSource { Gold, Predicted };

struct Losses {
  Var total, delta, alpha, beta;
  std::size_t unreachable_leaves = 0;
};

// Training forward pass: SLD scores on the input embeddings, links written
// into the relation matrix from `links`, encoder, OTE set loss and the
// teacher-forced tree loss.
Losses forward_losses(nn::Context& ctx, const Model& m, const PreparedExample& ex, LinkSource links);

struct Prediction {
  std::string sql;  // empty when the generated tree does not lift to a query
  sql::RaTree tree;
  sql::QueryPtr query;
  ote::TripleSet triples;
  std::size_t fallbacks = 0;
  bool forced = false;
};

Prediction predict(const Model& m, const PreparedInput& input);

// File: "mtsql-model <version>\n", header byte count, JSON header (config,
// vocabulary), then a parameter checkpoint.
inline constexpr int kModelVersion = 1;
void save_model(const Model& m, const std::filesystem::path& path);
std::string serialize_model(const Model& m);
Model load_model(const std::filesystem::path& path);
Model parse_model(std::string_view bytes);

}  // namespace mtsql::train
